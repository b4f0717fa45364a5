"""One-sided paired Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import AllZeroDifferences, ShapeMismatch, TooFewPairs

EXACT_MAX_N = 20
MIN_PAIRS = 5


@dataclass(frozen=True)
class WilcoxonResult:
    p_value: float
    w_plus: float
    n: int
    method: str  # "exact" or "normal"


def average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n; tied values share the mean of the ranks they span."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_lower_tail(ranks: np.ndarray, w_plus: float) -> float:
    """P(W+ <= w_plus) under the null, by counting sign patterns.

    Average ranks are multiples of 1/2, so doubled ranks are integers and a
    subset-sum count over them is exact.
    """
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    limit = int(np.rint(2 * w_plus))
    return int(counts[: limit + 1].sum()) / float(2 ** len(ranks))


def wilcoxon_one_sided(errors_a, errors_b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Test whether ``errors_a`` tends to be smaller than ``errors_b``.

    Zero differences are discarded. For up to ``exact_max_n`` remaining pairs
    the p-value is exact over all ``2^n`` sign assignments; beyond that a
    normal approximation with tie-corrected variance is used (no continuity
    correction).
    """
    a = np.asarray(errors_a, dtype=np.float64).ravel()
    b = np.asarray(errors_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeMismatch(f"paired samples differ in length: {a.shape} vs {b.shape}")
    d = a - b
    if len(d) and np.all(d == 0):
        raise AllZeroDifferences("all paired differences are zero")
    d = d[d != 0]
    n = len(d)
    if n < MIN_PAIRS:
        raise TooFewPairs(f"need >= {MIN_PAIRS} non-zero differences, got {n}")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        return WilcoxonResult(_exact_lower_tail(ranks, w_plus), w_plus, n, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    z = (w_plus - mean) / math.sqrt(var)
    return WilcoxonResult(0.5 * math.erfc(-z / math.sqrt(2.0)), w_plus, n, "normal")
