"""Iterated Prisoner's Dilemma with one-step memory, played turn-based.

The observed state is one of five values: Start plus the four remembered
(last leader action, last follower action) pairs.  An acting agent
overwrites its own slot immediately, so the follower observes the leader's
move from the current round.  At the opening move the unwritten opposite
slot surfaces as C (the Start carryover convention); this is what keeps the
state space at exactly five values while leaving the acting agent's action
recoverable from (state, actor, next state) for all twenty combinations.

Round payoffs land on the follower's step; leader steps yield (0, 0).
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .runner import Turn

__all__ = ["IpdAction", "IpdState", "ipd_payoff", "ipd_step", "IpdEnv",
           "IPD_HORIZON", "state_slots"]

IPD_HORIZON = 20  # agent decisions per episode: 10 leader/follower rounds


class IpdAction(Enum):
    C = 0
    D = 1


class IpdState(Enum):
    START = 0
    CC = 1
    CD = 2
    DC = 3
    DD = 4


_PAYOFF = {
    (IpdAction.C, IpdAction.C): (3.0, 3.0),
    (IpdAction.C, IpdAction.D): (0.0, 5.0),
    (IpdAction.D, IpdAction.C): (5.0, 0.0),
    (IpdAction.D, IpdAction.D): (1.0, 1.0),
}

_PAIR_TO_STATE = {
    (IpdAction.C, IpdAction.C): IpdState.CC,
    (IpdAction.C, IpdAction.D): IpdState.CD,
    (IpdAction.D, IpdAction.C): IpdState.DC,
    (IpdAction.D, IpdAction.D): IpdState.DD,
}

_STATE_TO_PAIR = {v: k for k, v in _PAIR_TO_STATE.items()}


def ipd_payoff(leader: IpdAction, follower: IpdAction) -> tuple[float, float]:
    """Round points for (leader action, follower action)."""
    return _PAYOFF[(leader, follower)]


def state_slots(state: IpdState) -> tuple[IpdAction, IpdAction] | None:
    """The remembered (leader, follower) pair, or None for Start."""
    return _STATE_TO_PAIR.get(state)


def ipd_step(state: IpdState, action: IpdAction, turn: Turn
             ) -> tuple[IpdState, tuple[float, float]]:
    """Apply one decision; defined on all (state, action, turn) combinations.

    Episode-legal play never reaches (Start, FOLLOWER); the transition is
    still defined (leader slot defaults to C) so the full 5x2x2 table can be
    enumerated.
    """
    slots = state_slots(state)
    if turn is Turn.LEADER:
        follower_slot = slots[1] if slots is not None else IpdAction.C
        return _PAIR_TO_STATE[(action, follower_slot)], (0.0, 0.0)
    leader_slot = slots[0] if slots is not None else IpdAction.C
    next_state = _PAIR_TO_STATE[(leader_slot, action)]
    return next_state, ipd_payoff(leader_slot, action)


class IpdEnv:
    """Environment adapter for the episode runner and the model."""

    env_id = "ipd"
    n_actions = 2
    horizon = IPD_HORIZON
    obs_dim = 5

    def reset(self, rng: np.random.Generator) -> IpdState:
        return IpdState.START

    def legal_actions(self, state: IpdState, turn: Turn):
        return (IpdAction.C, IpdAction.D)

    def step(self, state: IpdState, action: IpdAction, turn: Turn):
        return ipd_step(state, action, turn)

    def encode(self, state: IpdState) -> np.ndarray:
        vec = np.zeros(5)
        vec[state.value] = 1.0
        return vec

    def decode(self, vec: np.ndarray) -> IpdState:
        return IpdState(int(np.argmax(vec)))

    def action_from_index(self, idx: int) -> IpdAction:
        return IpdAction(idx)

    def action_index(self, action: IpdAction) -> int:
        return action.value

    def state_to_data(self, state: IpdState) -> int:
        return state.value

    def state_from_data(self, data) -> IpdState:
        return IpdState(int(data))
