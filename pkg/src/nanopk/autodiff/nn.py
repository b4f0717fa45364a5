"""Layers built on :class:`Tensor`, plus a named parameter store."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import BadRate, BatchTooSmall, ShapeMismatch
from .tensor import Tensor, as_tensor


class ParamStore:
    """Ordered named parameters, each tagged with the layer it belongs to.

    Buffers (e.g. batch-norm running statistics) live alongside but receive
    no gradient and are not regularized.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._layer: dict[str, str] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray, layer: str) -> Tensor:
        if name in self._params or name in self.buffers:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        self._layer[name] = layer
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params or name in self.buffers:
            raise ValueError(f"duplicate buffer name {name!r}")
        self.buffers[name] = np.array(value, dtype=np.float64)
        return self.buffers[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def layer_of(self, name: str) -> str:
        return self._layer[name]

    def layers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for name, layer in self._layer.items():
            out.setdefault(layer, []).append(name)
        return out

    def n_scalars(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {
            n: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for n, t in self._params.items()
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {n: t.data.copy() for n, t in self._params.items()}
        state.update({n: b.copy() for n, b in self.buffers.items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self._params) | set(self.buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise ShapeMismatch(f"state mismatch: missing={missing} unexpected={extra}")
        for n, t in self._params.items():
            if state[n].shape != t.shape:
                raise ShapeMismatch(f"{n}: expected {t.shape}, got {state[n].shape}")
            t.data = np.array(state[n], dtype=np.float64)
        for n, b in self.buffers.items():
            if state[n].shape != b.shape:
                raise ShapeMismatch(f"{n}: expected {b.shape}, got {state[n].shape}")
            b[...] = state[n]


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dense(x: Tensor, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ W + b`` over the last axis, as a single graph node."""
    x = as_tensor(x)
    if x.shape[-1] != weights.shape[0]:
        raise ShapeMismatch(f"dense: input {x.shape} vs weights {weights.shape}")
    if bias is not None and bias.shape != (weights.shape[1],):
        raise ShapeMismatch(f"dense: bias {bias.shape} vs weights {weights.shape}")
    if x.ndim != 2:
        out = x @ weights
        return out + bias if bias is not None else out
    a, w = x.data, weights.data
    out = a @ w
    if bias is not None:
        out += bias.data
    need_x = x.requires_grad

    def backward(g):
        gx = g @ w.T if need_x else None
        grads = (gx, a.T @ g)
        return grads + (g.sum(axis=0),) if bias is not None else grads

    parents = (x, weights, bias) if bias is not None else (x, weights)
    return Tensor._result(out, parents, backward)


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    if q.shape[-1] != k.shape[-1]:
        raise ShapeMismatch(f"attention: query {q.shape} vs key {k.shape}")
    scores = (q @ k.transpose(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    return scores.softmax(axis=-1)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """``softmax(Q K^T / sqrt(d_k)) V``; leading axes are batch axes.

    Computed as one graph node with a hand-written backward pass.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeMismatch(f"attention: query {q.shape} vs key {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch(f"attention: key {k.shape} vs value {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    qd, kd, vd = q.data, k.data, v.data
    scores = (qd @ np.swapaxes(kd, -1, -2)) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=-1, keepdims=True)

    def backward(g):
        gv = np.swapaxes(p, -1, -2) @ g
        gp = g @ np.swapaxes(vd, -1, -2)
        gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True)) * scale
        return gs @ kd, np.swapaxes(gs, -1, -2) @ qd, gv

    return Tensor._result(p @ vd, (q, k, v), backward)


def _norm_backward(g, xhat, inv, gain, axis):
    """Gradient of ``xhat * gain`` w.r.t. the un-normalized input, where
    ``xhat = (x - mean) * inv`` and statistics are taken along ``axis``."""
    gx = g * gain
    return inv * (
        gx
        - gx.mean(axis=axis, keepdims=True)
        - xhat * (gx * xhat).mean(axis=axis, keepdims=True)
    )


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the last axis, then scale and shift."""
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    a = x.data
    mu = a.mean(axis=-1, keepdims=True)
    centered = a - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    lead = tuple(range(a.ndim - 1))

    def backward(g):
        return (
            _norm_backward(g, xhat, inv, gain.data, -1),
            (g * xhat).sum(axis=lead),
            g.sum(axis=lead),
        )

    return Tensor._result(xhat * gain.data + shift.data, (x, gain, shift), backward)


def batch_norm(
    x: Tensor,
    gain: Tensor,
    shift: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize each column over the batch axis.

    Training mode uses batch statistics and updates the running buffers in
    place (``r <- (1 - momentum) r + momentum * batch``, unbiased variance);
    eval mode uses the buffers only.
    """
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    a = x.data
    if training:
        n = x.shape[0]
        if n < 2:
            raise BatchTooSmall(f"batch norm needs >= 2 rows in training mode, got {n}")
        mu = a.mean(axis=0)
        centered = a - mu
        var = (centered * centered).mean(axis=0)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * n / (n - 1)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv

        def backward(g):
            return (
                _norm_backward(g, xhat, inv, gain.data, 0),
                (g * xhat).sum(axis=0),
                g.sum(axis=0),
            )
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (a - running_mean) * inv

        def backward(g):
            return g * (gain.data * inv), (g * xhat).sum(axis=0), g.sum(axis=0)

    return Tensor._result(xhat * gain.data + shift.data, (x, gain, shift), backward)


def dropout(
    x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None
) -> Tensor:
    if not 0 <= rate < 1:
        raise BadRate(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = rng.random(x.shape) >= rate
    return x * (keep / (1.0 - rate))


def l2_penalty(params: ParamStore, lam: float, layers=None) -> Tensor:
    """``lam * sum_l ||theta_l||^2`` over the selected layers (all by default).

    Implemented as a single graph node whose backward pass is ``2 lam theta``.
    """
    if lam < 0:
        raise ValueError("l2 strength must be non-negative")
    selected = [
        params[n]
        for layer, names in params.layers().items()
        if layers is None or layer in layers
        for n in names
    ]
    if lam == 0 or not selected:
        return as_tensor(0.0)
    value = lam * sum(float(np.vdot(p.data, p.data)) for p in selected)
    datas = [p.data for p in selected]
    return Tensor._result(
        np.asarray(value),
        tuple(selected),
        lambda g: tuple((2.0 * lam * float(g)) * d for d in datas),
    )


@dataclass
class Linear:
    """Handle to a weight/bias pair registered in a :class:`ParamStore`."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, fan_in: int, fan_out: int,
               rng: np.random.Generator, layer: str | None = None, zero: bool = False) -> "Linear":
        layer = layer or prefix
        w = np.zeros((fan_in, fan_out)) if zero else glorot_uniform(rng, fan_in, fan_out)
        return cls(
            store.add(f"{prefix}.weight", w, layer),
            store.add(f"{prefix}.bias", np.zeros(fan_out), layer),
        )

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weight, self.bias)
