"""Turn-based episode runner and trajectory records.

An environment is a value-semantic state machine exposing::

    env_id: str            n_actions: int       horizon: int
    obs_dim: int
    reset(rng) -> state
    step(state, action, turn) -> (next_state, (reward_leader, reward_follower))
    legal_actions(state, turn) -> sequence of actions
    encode(state) -> 1-D float vector for model input
    state_to_data(state) / state_from_data(data) for serialization

Policies are callables (state, turn, rng) -> action; stateful policies may
expose reset(), which the runner calls at the start of every episode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "Turn",
    "TransitionRecord",
    "Trajectory",
    "ProtocolError",
    "EpisodeError",
    "run_episode",
    "record_to_line",
    "record_from_line",
]


class Turn(Enum):
    LEADER = 0
    FOLLOWER = 1

    @property
    def short(self) -> str:
        return "L" if self is Turn.LEADER else "F"


class ProtocolError(RuntimeError):
    """Turn-order violation in an environment step."""


class EpisodeError(RuntimeError):
    """A policy emitted an illegal action during an episode."""


@dataclass
class TransitionRecord:
    step: int
    actor: Turn
    state: object
    action: int
    rewards: tuple[float, float]
    next_state: object


@dataclass
class Trajectory:
    env_id: str
    seed: int
    records: list[TransitionRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def states(self) -> list:
        """Decision states s_0..s_{N-1} followed by the terminal next state."""
        out = [r.state for r in self.records]
        out.append(self.records[-1].next_state)
        return out

    def return_pair(self) -> tuple[float, float]:
        rl = sum(r.rewards[0] for r in self.records)
        rf = sum(r.rewards[1] for r in self.records)
        return rl, rf


def run_episode(env, leader_policy, follower_policy, horizon: int,
                rng: np.random.Generator, *, seed: int = -1) -> Trajectory:
    """Play one episode under strict alternation, Leader first."""
    for policy in (leader_policy, follower_policy):
        reset = getattr(policy, "reset", None)
        if reset is not None:
            reset()
    state = env.reset(rng)
    traj = Trajectory(env_id=env.env_id, seed=seed)
    for step in range(horizon):
        turn = Turn.LEADER if step % 2 == 0 else Turn.FOLLOWER
        policy = leader_policy if turn is Turn.LEADER else follower_policy
        action = policy(state, turn, rng)
        if action not in env.legal_actions(state, turn):
            raise EpisodeError(
                f"{env.env_id}: {turn.name} emitted illegal action {action!r} at step {step}")
        next_state, rewards = env.step(state, action, turn)
        traj.records.append(TransitionRecord(step, turn, state, action,
                                             (float(rewards[0]), float(rewards[1])),
                                             next_state))
        state = next_state
    return traj


def record_to_line(env, episode_id: int, rec: TransitionRecord) -> str:
    payload = {
        "episode": episode_id,
        "step": rec.step,
        "actor": rec.actor.short,
        "state": env.state_to_data(rec.state),
        "action": int(rec.action),
        "reward_leader": rec.rewards[0],
        "reward_follower": rec.rewards[1],
        "next_state": env.state_to_data(rec.next_state),
    }
    return json.dumps(payload, separators=(",", ":"))


def record_from_line(env, line: str) -> tuple[int, TransitionRecord]:
    d = json.loads(line)
    rec = TransitionRecord(
        step=d["step"],
        actor=Turn.LEADER if d["actor"] == "L" else Turn.FOLLOWER,
        state=env.state_from_data(d["state"]),
        action=d["action"],
        rewards=(d["reward_leader"], d["reward_follower"]),
        next_state=env.state_from_data(d["next_state"]),
    )
    return d["episode"], rec
