"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .nn import ParamStore
from .tensor import Tensor


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: ParamStore,
    eps: float = 1e-5,
    n_samples: int = 200,
    seed: int = 0,
    analytic: dict[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be deterministic and return a scalar built from
    ``params``. Up to ``n_samples`` scalar entries are drawn across all
    parameters (all entries when there are fewer). ``analytic`` overrides
    the backward-pass gradients, which is how a corrupted gradient is fed in
    as a negative control.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    if analytic is None:
        params.zero_grad()
        loss_fn().backward()
        analytic = params.grads()

    slots = [(name, i) for name in params for i in range(params[name].size)]
    rng = np.random.default_rng(seed)
    if len(slots) > n_samples:
        picks = rng.choice(len(slots), size=n_samples, replace=False)
        slots = [slots[i] for i in sorted(picks)]

    worst = 0.0
    for name, i in slots:
        flat = params[name].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn().item()
        flat[i] = orig - eps
        down = loss_fn().item()
        flat[i] = orig
        numeric = (up - down) / (2 * eps)
        exact = analytic[name].reshape(-1)[i]
        err = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
