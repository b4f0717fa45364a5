"""SMOTE-style oversampling of rare target values for regression.

Synthetic rows are interpolated in raw physical units, before any encoding,
so that engineered features recomputed from them stay formula-consistent.
Neighbour search uses z-scored numeric columns of the rows being augmented.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import NUMERIC, TARGETS, SampleRecord, numeric_matrix, targets_matrix


@dataclass(frozen=True)
class AugmentConfig:
    rare_quantile: float = 0.9
    k_neighbors: int = 5
    oversample_factor: float = 1.0
    seed: int = 0
    enabled: bool = True

    def __post_init__(self):
        if not 0 < self.rare_quantile < 1:
            raise ValueError("rare_quantile must lie in (0, 1)")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.oversample_factor < 0:
            raise ValueError("oversample_factor must be >= 0")


@dataclass
class AugmentResult:
    """Original rows followed by synthetic rows.

    ``seed_idx``/``neighbor_idx``/``lam`` describe each synthetic row and
    index into the *input* rows; ``warning`` is set when nothing could be
    generated.
    """

    rows: np.ndarray
    targets: np.ndarray
    seed_idx: np.ndarray
    neighbor_idx: np.ndarray
    lam: np.ndarray
    rare_idx: np.ndarray
    warning: str | None = None

    @property
    def n_synthetic(self) -> int:
        return len(self.seed_idx)


def identify_rare(targets: Sequence[float], rare_quantile: float) -> np.ndarray:
    """Indices whose value is strictly above the empirical ``rare_quantile``."""
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise ValueError("targets must be non-empty")
    cut = np.quantile(y, rare_quantile)
    return np.flatnonzero(y > cut)


def rare_union(targets: np.ndarray, rare_quantile: float) -> np.ndarray:
    """Union of the per-column rare sets of a target matrix."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    idx = set()
    for j in range(targets.shape[1]):
        idx.update(identify_rare(targets[:, j], rare_quantile).tolist())
    return np.array(sorted(idx), dtype=np.int64)


def _unchanged(rows, targets, rare, warning=None) -> AugmentResult:
    empty = np.zeros(0, dtype=np.int64)
    return AugmentResult(rows.copy(), targets.copy(), empty, empty.copy(), np.zeros(0), rare, warning)


def _lerp(a: np.ndarray, b: np.ndarray, lam: np.ndarray) -> np.ndarray:
    out = a + lam[:, None] * (b - a)
    # rounding can overshoot the segment end by one ulp
    return np.clip(out, np.minimum(a, b), np.maximum(a, b))


def smote_regression(rows: np.ndarray, targets: np.ndarray, cfg: AugmentConfig) -> AugmentResult:
    """Interpolate new rows between rare samples and their rare neighbours.

    ``rows`` is an ``(n, p)`` matrix of raw numeric features, ``targets`` an
    ``(n,)`` or ``(n, m)`` array. Rarity is computed per target column and the
    union is oversampled once; features and every target are interpolated
    with the same draw ``lam ~ U(0, 1)``.
    """
    rows = np.asarray(rows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    one_dim = targets.ndim == 1
    y = targets[:, None] if one_dim else targets
    rare = rare_union(y, cfg.rare_quantile)

    n_new = int(round(cfg.oversample_factor * len(rare)))
    if not cfg.enabled or n_new == 0:
        return _unchanged(rows, targets, rare)
    if len(rare) < 2:
        warnings.warn(f"SMOTE skipped: only {len(rare)} rare sample(s)", stacklevel=2)
        return _unchanged(rows, targets, rare, warning="too_few_rare")

    std = rows.std(axis=0)
    std[std == 0] = 1.0
    z = (rows - rows.mean(axis=0)) / std
    zr = z[rare]
    dist = np.sqrt(((zr[:, None, :] - zr[None, :, :]) ** 2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    k = min(cfg.k_neighbors, len(rare) - 1)
    # stable sort keeps neighbour choice deterministic under distance ties
    neighbours = np.argsort(dist, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(cfg.seed)
    seed_pos = rng.integers(0, len(rare), size=n_new)
    nb_pos = neighbours[seed_pos, rng.integers(0, k, size=n_new)]
    lam = rng.uniform(0.0, 1.0, size=n_new)

    seed_idx = rare[seed_pos]
    nb_idx = rare[nb_pos]
    new_rows = _lerp(rows[seed_idx], rows[nb_idx], lam)
    new_y = _lerp(y[seed_idx], y[nb_idx], lam)
    out_y = np.vstack([y, new_y])
    return AugmentResult(
        np.vstack([rows, new_rows]),
        out_y[:, 0] if one_dim else out_y,
        seed_idx,
        nb_idx,
        lam,
        rare,
    )


@dataclass
class AugmentedRecords:
    records: list[SampleRecord]
    # provenance: for originals, the caller's row id; for synthetic rows,
    # the pair of parent row ids
    origin: list[tuple[int, ...]] = field(default_factory=list)
    result: AugmentResult | None = None

    @property
    def n_synthetic(self) -> int:
        return sum(1 for o in self.origin if len(o) == 2)


def augment_records(
    records: Sequence[SampleRecord],
    cfg: AugmentConfig,
    row_ids: Sequence[int] | None = None,
) -> AugmentedRecords:
    """Record-level SMOTE: numerics and targets interpolated, categoricals
    copied from the seed row."""
    records = list(records)
    row_ids = list(range(len(records))) if row_ids is None else list(row_ids)
    origin = [(r,) for r in row_ids]
    if not records:
        return AugmentedRecords(records, origin)
    res = smote_regression(numeric_matrix(records), targets_matrix(records), cfg)
    out = list(records)
    n = len(records)
    for j in range(res.n_synthetic):
        seed = records[res.seed_idx[j]]
        changes = {name: float(res.rows[n + j, c]) for c, name in enumerate(NUMERIC)}
        changes.update({name: float(res.targets[n + j, c]) for c, name in enumerate(TARGETS)})
        out.append(replace(seed, **changes))
        origin.append((row_ids[res.seed_idx[j]], row_ids[res.neighbor_idx[j]]))
    return AugmentedRecords(out, origin, res)
