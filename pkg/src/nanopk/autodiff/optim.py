"""SGD and Adam over a :class:`ParamStore`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import BadConfig, ShapeMismatch
from .nn import ParamStore

try:  # optional: a compiled single-pass update kernel
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

LEARNING_RATE_GRID = (1e-3, 5e-4, 1e-4)


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    # use the compiled kernel when available (same update, one memory pass)
    compiled: bool = True

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise BadConfig(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise BadConfig("learning rate must be positive")


def _adam_numpy(theta, g, m, v, b1, b2, step, eps_hat, decay):
    if decay:
        g = g + decay * theta
    tmp = np.multiply(g, 1 - b1)
    m *= b1
    m += tmp
    np.multiply(g, g, out=tmp)
    tmp *= 1 - b2
    v *= b2
    v += tmp
    np.sqrt(v, out=tmp)
    tmp += eps_hat
    np.divide(m, tmp, out=tmp)
    tmp *= step
    theta -= tmp


def _sgd_numpy(theta, g, lr, decay):
    if decay:
        g = g + decay * theta
    theta -= lr * g


if numba is not None:

    @numba.njit(cache=True, fastmath=False)
    def _adam_kernel(theta, g, m, v, b1, b2, step, eps_hat, decay):  # pragma: no cover
        for i in range(theta.size):
            gi = g[i] + decay * theta[i]
            mi = b1 * m[i] + (1.0 - b1) * gi
            vi = b2 * v[i] + (1.0 - b2) * gi * gi
            m[i] = mi
            v[i] = vi
            theta[i] -= step * (mi / (np.sqrt(vi) + eps_hat))

    @numba.njit(cache=True, fastmath=False)
    def _sgd_kernel(theta, g, lr, decay):  # pragma: no cover
        for i in range(theta.size):
            theta[i] -= lr * (g[i] + decay * theta[i])


def _adam_update(state: OptimizerState, name: str, theta: np.ndarray, g: np.ndarray,
                 decay: float = 0.0) -> None:
    """In-place Adam update of ``theta`` with gradient ``g + decay * theta``.

    Bias correction is folded into the step size,
    ``lr * sqrt(1 - b2^t) / (1 - b1^t) * m / (sqrt(v) + eps * sqrt(1 - b2^t))``,
    which is algebraically identical to dividing corrected moments.
    """
    m = state.m.get(name)
    if m is None:
        m = state.m[name] = np.zeros_like(theta)
        state.v[name] = np.zeros_like(theta)
    v = state.v[name]
    t = state.step
    c2 = np.sqrt(1 - state.beta2**t)
    step = state.learning_rate * c2 / (1 - state.beta1**t)
    args = (state.beta1, state.beta2, step, state.eps * c2, decay)
    if state.compiled and numba is not None and theta.flags.c_contiguous and g.flags.c_contiguous:
        _adam_kernel(theta.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1), *args)
    else:
        _adam_numpy(theta, g, m, v, *args)


def optimizer_step(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Return updated copies of ``params``; ``state`` moments advance in place."""
    out = {}
    for name, theta in params.items():
        if grads[name].shape != theta.shape:
            raise ShapeMismatch(f"{name}: grad {grads[name].shape} vs param {theta.shape}")
        out[name] = np.array(theta, dtype=np.float64)
    _step_inplace(state, out, grads)
    return out


def _step_inplace(state: OptimizerState, params: dict[str, np.ndarray], grads,
                  decay: dict[str, float] | None = None) -> None:
    state.step += 1
    decay = decay or {}
    for name, theta in params.items():
        g = grads[name]
        if g is None:
            continue
        c = decay.get(name, 0.0)
        if state.kind == "adam":
            _adam_update(state, name, theta, g, c)
        elif state.compiled and numba is not None and theta.flags.c_contiguous and g.flags.c_contiguous:
            _sgd_kernel(theta.reshape(-1), g.reshape(-1), state.learning_rate, c)
        else:
            _sgd_numpy(theta, g, state.learning_rate, c)


def apply_step(state: OptimizerState, store: ParamStore, l2: float = 0.0,
               l2_layers=None) -> None:
    """One optimizer update using the gradients currently held by ``store``.

    Parameters without a gradient (unused by the loss) are treated as having
    a zero gradient. A non-zero ``l2`` adds the gradient ``2 * l2 * theta`` of
    the penalty ``l2 * ||theta||^2`` for parameters in ``l2_layers`` (all
    layers when None) inside the update, so the penalty need not be part of
    the graph.
    """
    params = {n: t.data for n, t in store.items()}
    grads = {}
    for n, t in store.items():
        if t.grad is None:
            grads[n] = np.zeros_like(t.data)
        elif t.grad.shape != t.data.shape:
            raise ShapeMismatch(f"{n}: grad {t.grad.shape} vs param {t.data.shape}")
        else:
            grads[n] = t.grad
    decay = {}
    if l2:
        for layer, names in store.layers().items():
            if l2_layers is None or layer in l2_layers:
                decay.update({n: 2.0 * l2 for n in names})
    _step_inplace(state, params, grads, decay)
