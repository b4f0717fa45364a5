"""Regression metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch, ZeroVarianceTargets


@dataclass(frozen=True)
class MetricPair:
    r2: float
    rmse: float

    def to_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse}


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ShapeMismatch(f"y {y.shape} vs y_hat {y_hat.shape}")
    return y, y_hat


def r2(y, y_hat) -> float:
    """Coefficient of determination; negative when worse than the mean."""
    y, y_hat = _pair(y, y_hat)
    if len(y) < 2:
        raise ZeroVarianceTargets("r2 needs at least two targets")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVarianceTargets("r2 is undefined for constant targets")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    if len(y) < 1:
        raise ShapeMismatch("rmse needs at least one target")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def metric_pair(y, y_hat) -> MetricPair:
    return MetricPair(r2(y, y_hat), rmse(y, y_hat))
