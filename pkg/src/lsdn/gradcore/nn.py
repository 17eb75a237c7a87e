"""Neural building blocks on top of the tape: MLP, GRU, gradient checking.

Initialization is uniform in +-sqrt(1/fan_in), drawn from a caller-supplied
generator so runs are reproducible from a single seed.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    backward,
    concat,
    gradients,
    sigmoid,
    softplus,
    tanh,
)

__all__ = [
    "MlpParams",
    "GruParams",
    "forward_mlp",
    "gru_cell",
    "run_gru_forward",
    "run_gru_reverse",
    "grad_check",
    "grad_check_detail",
]

_ACTIVATIONS = {"softplus": softplus, "tanh": tanh, "sigmoid": sigmoid}


def _init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class MlpParams:
    """Dense stack with a hidden activation between layers and a linear output.

    ``layer_sizes`` gives [input, hidden..., output]; the default hidden
    activation is softplus.
    """

    def __init__(self, layer_sizes, activation: str = "softplus", *,
                 rng: np.random.Generator | None = None, name: str = "mlp"):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng or np.random.default_rng(0)
        self.layer_sizes = list(layer_sizes)
        self.activation = activation
        self.name = name
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            self.weights.append(
                Tensor(_init(rng, n_in, (n_in, n_out)), requires_grad=True,
                       name=f"{name}.w{i}"))
            self.biases.append(
                Tensor(_init(rng, n_in, (n_out,)), requires_grad=True,
                       name=f"{name}.b{i}"))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        return out

    def set_zero(self):
        for p in self.parameters().values():
            p.data[...] = 0.0


def forward_mlp(params: MlpParams, x: Tensor) -> Tensor:
    """Run the MLP; the last layer is linear."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.shape[-1] != params.in_dim:
        raise ShapeError(
            f"{params.name}: input has last dim {x.data.shape[-1]}, "
            f"layer 0 expects {params.in_dim}")
    act = _ACTIVATIONS[params.activation]
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = (x @ w) + b
        if i < n - 1:
            x = act(x)
    return x


class GruParams:
    """Single-layer GRU cell parameters.

    Gate equations (original update/reset/candidate formulation):

        z_t = sigmoid(x W_z + h U_z + b_z)          update gate
        r_t = sigmoid(x W_r + h U_r + b_r)          reset gate
        n_t = tanh(x W_n + (r_t * h) U_n + b_n)     candidate
        h_t = z_t * h_{t-1} + (1 - z_t) * n_t

    Row-vector convention: x is [batch, in], h is [batch, hidden].
    """

    def __init__(self, in_dim: int, hidden_dim: int, *,
                 rng: np.random.Generator | None = None, name: str = "gru"):
        rng = rng or np.random.default_rng(0)
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.name = name

        def w(tag, fan_in, shape):
            return Tensor(_init(rng, fan_in, shape), requires_grad=True,
                          name=f"{name}.{tag}")

        h = hidden_dim
        self.w_z = w("w_z", in_dim, (in_dim, h))
        self.u_z = w("u_z", h, (h, h))
        self.b_z = w("b_z", in_dim, (h,))
        self.w_r = w("w_r", in_dim, (in_dim, h))
        self.u_r = w("u_r", h, (h, h))
        self.b_r = w("b_r", in_dim, (h,))
        self.w_n = w("w_n", in_dim, (in_dim, h))
        self.u_n = w("u_n", h, (h, h))
        self.b_n = w("b_n", in_dim, (h,))

    def parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.w_z, self.u_z, self.b_z,
                                    self.w_r, self.u_r, self.b_r,
                                    self.w_n, self.u_n, self.b_n)}

    def set_zero(self):
        for p in self.parameters().values():
            p.data[...] = 0.0


def gru_cell(params: GruParams, x: Tensor, h: Tensor) -> Tensor:
    """One GRU step; see GruParams for the gate equations."""
    if x.data.shape[-1] != params.in_dim:
        raise ShapeError(
            f"{params.name}: input dim {x.data.shape[-1]} != {params.in_dim}")
    z = sigmoid(x @ params.w_z + h @ params.u_z + params.b_z)
    r = sigmoid(x @ params.w_r + h @ params.u_r + params.b_r)
    n = tanh(x @ params.w_n + (r * h) @ params.u_n + params.b_n)
    return z * h + (Tensor(1.0) - z) * n


def _zero_hidden(params: GruParams, x: Tensor) -> Tensor:
    if x.data.ndim == 2:
        return Tensor(np.zeros((x.data.shape[0], params.hidden_dim)))
    return Tensor(np.zeros(params.hidden_dim))


def run_gru_forward(params: GruParams, sequence) -> list[Tensor]:
    """Scan front to back from a zero hidden state; returns per-step states."""
    if len(sequence) == 0:
        raise ValueError("empty sequence")
    h = _zero_hidden(params, sequence[0] if isinstance(sequence[0], Tensor) else Tensor(sequence[0]))
    out = []
    for x in sequence:
        h = gru_cell(params, x if isinstance(x, Tensor) else Tensor(x), h)
        out.append(h)
    return out


def run_gru_reverse(params: GruParams, sequence) -> list[Tensor]:
    """Scan back to front; output i summarizes observations at positions >= i."""
    if len(sequence) == 0:
        raise ValueError("empty sequence")
    first = sequence[0] if isinstance(sequence[0], Tensor) else Tensor(sequence[0])
    h = _zero_hidden(params, first)
    out: list[Tensor] = [None] * len(sequence)  # type: ignore[list-item]
    for i in range(len(sequence) - 1, -1, -1):
        x = sequence[i]
        h = gru_cell(params, x if isinstance(x, Tensor) else Tensor(x), h)
        out[i] = h
    return out


def grad_check_detail(fn, params: dict[str, Tensor], eps: float = 1e-5) -> dict[str, float]:
    """Per-parameter max relative error |autodiff - central difference|.

    ``fn`` must be a deterministic closure over ``params`` returning a scalar
    Tensor (freeze any randomness outside).  The relative error is
    |g_ad - g_fd| / max(1, |g_fd|), maxed over the entries of each parameter.
    """
    loss = fn()
    grads = gradients(loss, params)
    report = {}
    for name, p in params.items():
        g_ad = grads[name]
        flat = p.data.reshape(-1)
        worst = 0.0
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = fn().item()
            flat[j] = orig - eps
            dn = fn().item()
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(dn)):
                raise FloatingPointError(
                    f"non-finite value while perturbing {name}[{j}]")
            g_fd = (up - dn) / (2.0 * eps)
            err = abs(g_ad.reshape(-1)[j] - g_fd) / max(1.0, abs(g_fd))
            worst = max(worst, err)
        report[name] = worst
    return report


def grad_check(fn, params: dict[str, Tensor], eps: float = 1e-5) -> float:
    """Max over all parameters of the central-difference relative error."""
    report = grad_check_detail(fn, params, eps)
    return max(report.values()) if report else 0.0
