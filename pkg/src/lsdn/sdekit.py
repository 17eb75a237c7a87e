"""Fixed-step simulation of multi-output geometric Brownian motion in latent
space: drift/diffusion separation, Euler-Maruyama integration, and pathwise
KL accumulation between two drifts sharing one diffusion.

Everything differentiable runs through the gradcore tape, so gradients of a
path endpoint or of the KL integral with respect to drift/diffusion
parameters come from plain backpropagation through the unrolled steps.
The KL integral uses a left-endpoint Riemann sum at the solver's own step
size, which is exactly the augmented-scalar formulation of the path KL
(drift 0.5*|u|^2, zero diffusion) under the same discretization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gradcore import MlpParams, Tensor, concat, forward_mlp, sigmoid, tsum

__all__ = [
    "TimeGrid",
    "BrownianPath",
    "DriftSpec",
    "DiffusionSpec",
    "SdePathResult",
    "IntegrationError",
    "sample_brownian",
    "compose_drift",
    "diffusion_value",
    "euler_maruyama",
    "pathwise_kl",
    "DEFAULT_DT",
    "SIGMA_FLOOR",
]

DEFAULT_DT = 0.01
SIGMA_FLOOR = 1e-3


class IntegrationError(RuntimeError):
    """Raised when the solver produces a non-finite state."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_end] with step dt; t_end must be a multiple of dt."""

    t_end: float
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-12 * max(1.0, steps):
            raise ValueError(
                f"t_end={self.t_end} is not an integer multiple of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def times(self) -> np.ndarray:
        """Grid points t_0..t_n (length n_steps+1)."""
        return np.arange(self.n_steps + 1) * self.dt


@dataclass
class BrownianPath:
    """Increments of shape [steps, dim] or [steps, batch, dim]."""

    increments: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]


def sample_brownian(grid: TimeGrid, dim: int, rng: np.random.Generator,
                    batch: int | None = None) -> BrownianPath:
    """Draw i.i.d. increments with mean 0 and variance dt per coordinate."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    shape = (grid.n_steps, dim) if batch is None else (grid.n_steps, batch, dim)
    return BrownianPath(np.sqrt(grid.dt) * rng.standard_normal(shape))


class DriftSpec:
    """Two drift heads composed into one latent drift field.

    split mode: the leader head produces dims [0, d/2) and the follower head
    dims [d/2, d); the full drift is their concatenation and the active actor
    is ignored.  phase-gated mode: each head produces all d dims and only the
    active actor's head contributes.

    Head inputs are [z, t] and optionally a trailing context block when
    ``context_dim`` > 0 (posterior drifts are time-inhomogeneous through it).
    """

    def __init__(self, dim: int, hidden: int, *, mode: str = "split",
                 context_dim: int = 0, rng: np.random.Generator | None = None,
                 name: str = "drift"):
        if mode not in ("split", "phase-gated"):
            raise ValueError(f"unknown drift mode {mode!r}")
        if mode == "split" and dim % 2 != 0:
            raise ValueError("split mode requires an even latent dimension")
        self.dim = dim
        self.mode = mode
        self.context_dim = context_dim
        out = dim // 2 if mode == "split" else dim
        in_dim = dim + 1 + context_dim
        rng = rng or np.random.default_rng(0)
        self.leader = MlpParams([in_dim, hidden, out], rng=rng, name=f"{name}.leader")
        self.follower = MlpParams([in_dim, hidden, out], rng=rng, name=f"{name}.follower")

    def parameters(self) -> dict[str, Tensor]:
        return {**self.leader.parameters(), **self.follower.parameters()}

    def heads(self):
        return {"leader": self.leader, "follower": self.follower}


def _with_time(z: Tensor, t: float, context: Tensor | None) -> Tensor:
    if z.data.ndim == 2:
        t_col = Tensor(np.full((z.data.shape[0], 1), t))
    else:
        t_col = Tensor(np.array([t]))
    parts = [z, t_col]
    if context is not None:
        parts.append(context)
    return concat(parts, axis=-1)


def compose_drift(spec: DriftSpec, z: Tensor, t: float,
                  active_actor: str | None = None,
                  context: Tensor | None = None) -> Tensor:
    """Evaluate the composed drift at (z, t).

    ``active_actor`` ("leader"/"follower") selects the live head in
    phase-gated mode and is ignored in split mode.
    """
    if (context is None) != (spec.context_dim == 0):
        raise ValueError("context presence must match the spec's context_dim")
    x = _with_time(z if isinstance(z, Tensor) else Tensor(z), t, context)
    if spec.mode == "split":
        return concat([forward_mlp(spec.leader, x), forward_mlp(spec.follower, x)],
                      axis=-1)
    if active_actor not in ("leader", "follower"):
        raise ValueError("phase-gated mode needs active_actor leader/follower")
    head = spec.leader if active_actor == "leader" else spec.follower
    return forward_mlp(head, x)


class DiffusionSpec:
    """Shared diagonal diffusion: sigma = floor + (1 - floor) * sigmoid(net).

    One object is shared by the prior and posterior SDEs, and the output is
    elementwise in [floor, 1] by construction.
    """

    def __init__(self, dim: int, hidden: int, *, floor: float = SIGMA_FLOOR,
                 rng: np.random.Generator | None = None, name: str = "diffusion"):
        self.dim = dim
        self.floor = floor
        self.net = MlpParams([dim + 1, hidden, dim], rng=rng or np.random.default_rng(0),
                             name=name)

    @classmethod
    def constant(cls, dim: int, value: float, *, floor: float = SIGMA_FLOOR) -> "DiffusionSpec":
        """A diffusion that outputs ``value`` everywhere (for tests/diagnostics)."""
        if not (floor <= value <= 1.0):
            raise ValueError(f"constant diffusion must lie in [{floor}, 1]")
        spec = cls(dim, 1, floor=floor)
        spec.net.set_zero()
        # sigmoid(b) = (value - floor) / (1 - floor), clipped away from 0/1
        frac = (value - floor) / (1.0 - floor)
        frac = min(max(frac, 1e-12), 1 - 1e-12)
        spec.net.biases[-1].data[...] = np.log(frac / (1.0 - frac))
        return spec

    def parameters(self) -> dict[str, Tensor]:
        return self.net.parameters()


def diffusion_value(spec: DiffusionSpec, z: Tensor, t: float) -> Tensor:
    x = _with_time(z if isinstance(z, Tensor) else Tensor(z), t, None)
    return spec.floor + (1.0 - spec.floor) * sigmoid(forward_mlp(spec.net, x))


@dataclass
class SdePathResult:
    """Latent states along the grid plus the accumulated KL integral.

    ``states`` keeps each grid point as a tape tensor so downstream terms
    (reconstruction, anchors) stay differentiable; ``kl`` is per path
    (scalar tensor, or [batch] for batched simulation) and is zero when no
    reference drift was supplied.
    """

    states: list[Tensor]
    kl: Tensor

    @property
    def z(self) -> np.ndarray:
        return np.stack([s.data for s in self.states])

    @property
    def endpoint(self) -> Tensor:
        return self.states[-1]


def _kl_increment(drift_gap: Tensor, sigma: Tensor, dt: float) -> Tensor:
    u = drift_gap / sigma
    return tsum(u * u, axis=-1) * (0.5 * dt)


def euler_maruyama(z0, drift: DriftSpec, diffusion: DiffusionSpec, grid: TimeGrid,
                   path: BrownianPath, *, phase=None, context_fn=None,
                   kl_against: DriftSpec | None = None) -> SdePathResult:
    """Integrate z_{k+1} = z_k + h(z_k,t_k) dt + sigma(z_k,t_k) * dW_k.

    ``phase`` maps a step index to the active actor (phase-gated drifts);
    ``context_fn`` maps a step index to the drift's context tensor.  When
    ``kl_against`` is given, the path KL between ``drift`` and it (sharing
    ``diffusion``) is accumulated alongside the state, as in the augmented
    scalar-variable formulation.
    """
    z = z0 if isinstance(z0, Tensor) else Tensor(z0)
    if z.data.shape[-1] != drift.dim:
        raise ValueError(f"z0 has dim {z.data.shape[-1]}, drift expects {drift.dim}")
    if path.n_steps != grid.n_steps:
        raise ValueError(
            f"Brownian path has {path.n_steps} steps, grid has {grid.n_steps}")
    dt = grid.dt
    batched = z.data.ndim == 2
    kl = Tensor(np.zeros(z.data.shape[0])) if batched else Tensor(0.0)
    states = [z]
    for k in range(grid.n_steps):
        t = k * dt
        actor = phase(k) if phase is not None else None
        ctx = context_fn(k) if context_fn is not None else None
        h = compose_drift(drift, z, t, actor, ctx)
        sig = diffusion_value(diffusion, z, t)
        if kl_against is not None:
            ref_ctx = None if kl_against.context_dim == 0 else ctx
            h_ref = compose_drift(kl_against, z, t, actor, ref_ctx)
            kl = kl + _kl_increment(h - h_ref, sig, dt)
        z = z + h * dt + sig * Tensor(path.increments[k])
        if not np.all(np.isfinite(z.data)):
            raise IntegrationError(k, "non-finite latent state")
        states.append(z)
    return SdePathResult(states=states, kl=kl)


def pathwise_kl(prior: DriftSpec, posterior: DriftSpec, diffusion: DiffusionSpec,
                z_path, grid: TimeGrid, *, phase=None, context_fn=None) -> Tensor:
    """Left-endpoint sum of 0.5*|u|^2 dt with u = (h_post - h_prior) / sigma.

    ``z_path`` provides the states at grid points (only the first n_steps are
    read).  Zero exactly when both drifts agree on every visited (z, t).
    """
    if len(z_path) < grid.n_steps + 1:
        raise ValueError(
            f"path has {len(z_path)} points, grid needs {grid.n_steps + 1}")
    first = z_path[0]
    batched = (first.data if isinstance(first, Tensor) else np.asarray(first)).ndim == 2
    total = Tensor(np.zeros(first.data.shape[0])) if batched else Tensor(0.0)
    dt = grid.dt
    for k in range(grid.n_steps):
        z = z_path[k]
        z = z if isinstance(z, Tensor) else Tensor(z)
        t = k * dt
        actor = phase(k) if phase is not None else None
        ctx = context_fn(k) if context_fn is not None else None
        h_post = compose_drift(posterior, z, t, actor,
                               None if posterior.context_dim == 0 else ctx)
        h_prior = compose_drift(prior, z, t, actor,
                                None if prior.context_dim == 0 else ctx)
        sig = diffusion_value(diffusion, z, t)
        if np.any(sig.data < diffusion.floor - 1e-12):
            raise FloatingPointError("diffusion fell below its floor")
        total = total + _kl_increment(h_post - h_prior, sig, dt)
    return total
