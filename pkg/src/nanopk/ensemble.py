"""Convex per-output weighting of DNN, boosted-tree and forest predictions."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import BadConfig, EmptyValidation, ShapeMismatch


@dataclass(frozen=True)
class EnsembleWeights:
    """``weights[o, k]`` is the weight of model ``k`` for output ``o``."""

    weights: np.ndarray
    members: tuple[str, ...] = ("DNN", "XGB", "RF")
    grid_step: float = 0.05

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != len(self.members):
            raise ShapeMismatch(f"weights {w.shape} vs {len(self.members)} members")
        if np.any(w < 0) or not np.allclose(w.sum(axis=1), 1.0, atol=1e-12):
            raise BadConfig("ensemble weights must be non-negative and sum to one")
        object.__setattr__(self, "weights", w)

    def to_dict(self) -> dict:
        return {"members": list(self.members), "grid_step": self.grid_step,
                "weights": self.weights.tolist()}


def simplex_grid(n_models: int, step: float) -> np.ndarray:
    """All weight vectors on the simplex whose entries are multiples of ``step``.

    Rows are in lexicographic order. Entries are ``count / steps`` so the
    vertices are exact ``0.0``/``1.0``.
    """
    if not 0 < step <= 1:
        raise BadConfig(f"grid_step must lie in (0, 1], got {step}")
    steps = int(round(1.0 / step))
    if steps < 1 or abs(steps * step - 1.0) > 1e-9:
        raise BadConfig(f"grid_step must divide 1 evenly, got {step}")
    rows = [c + (steps - sum(c),) for c in product(range(steps + 1), repeat=n_models - 1)
            if sum(c) <= steps]
    return np.asarray(rows, dtype=np.float64) / steps


def combine(preds: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``sum_k w[k] * preds[k]``, accumulated in member order.

    Zero-weight members are skipped, so a vertex weight vector returns the
    selected member's predictions bit-for-bit.
    """
    out = np.zeros(preds.shape[1:])
    for k, wk in enumerate(w):
        if wk != 0.0:
            out = out + wk * preds[k]
    return out


def _rmse(y: np.ndarray, p: np.ndarray) -> float:
    return float(np.sqrt(np.mean((y - p) ** 2)))


def fit_weights(
    val_preds: list[np.ndarray] | np.ndarray,
    val_targets: np.ndarray,
    grid_step: float = 0.05,
    members: tuple[str, ...] = ("DNN", "XGB", "RF"),
    rtol: float = 1e-12,
) -> EnsembleWeights:
    """Exhaustive simplex-grid search minimising validation RMSE per output.

    Ties (scores within ``rtol`` relative of the minimum) go to the larger
    first weight, then the larger second weight, and so on.
    """
    preds = np.asarray(val_preds, dtype=np.float64)
    y = np.asarray(val_targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
        preds = preds[..., None] if preds.ndim == 2 else preds
    if preds.ndim != 3 or preds.shape[1:] != y.shape:
        raise ShapeMismatch(f"predictions {preds.shape} vs targets {y.shape}")
    if preds.shape[0] != len(members):
        raise ShapeMismatch(f"{preds.shape[0]} prediction sets vs {len(members)} members")
    if y.shape[0] < 1:
        raise EmptyValidation("need at least one validation row")
    grid = simplex_grid(len(members), grid_step)
    out = np.empty((y.shape[1], len(members)))
    for o in range(y.shape[1]):
        scores = np.array([_rmse(y[:, o], combine(preds[:, :, o], w)) for w in grid])
        best = scores.min()
        # vertices are single members; keep the exact "never worse than any
        # member" guarantee even when a non-vertex lands within rtol
        vertex_best = min(_rmse(y[:, o], preds[k, :, o]) for k in range(len(members)))
        ok = (scores <= best + rtol * max(best, 1e-300)) & (scores <= vertex_best)
        cand = grid[ok]
        # lexicographically largest: sort by columns, first column most significant
        order = np.lexsort(cand.T[::-1])
        out[o] = cand[order[-1]]
    return EnsembleWeights(out, tuple(members), grid_step)


def ensemble_predict(preds: list[np.ndarray] | np.ndarray, w: EnsembleWeights) -> np.ndarray:
    """Per-output convex combination, shape (n, outputs)."""
    p = np.asarray(preds, dtype=np.float64)
    squeeze = p.ndim == 2
    if squeeze:
        p = p[..., None]
    if p.shape[0] != w.weights.shape[1] or p.shape[2] != w.weights.shape[0]:
        raise ShapeMismatch(f"predictions {p.shape} vs weights {w.weights.shape}")
    out = np.stack([combine(p[:, :, o], w.weights[o]) for o in range(p.shape[2])], axis=1)
    return out[:, 0] if squeeze else out
