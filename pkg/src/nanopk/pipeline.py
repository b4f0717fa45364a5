"""Fitted preprocessing: primary encoding, secondary z-scoring, target scaling.

Every statistic is computed from the records passed to :meth:`Preprocessor.fit`
and nothing else, which is what keeps cross-validation leakage free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import PrimaryEncoder, SampleRecord, _apply_zscore, _zscore_stats, targets_matrix
from .features import secondary_matrix
from .models.training import Arrays
from .priors import DEFAULT_CRITERIA, OrganCriteria


@dataclass(frozen=True)
class Preprocessor:
    primary: PrimaryEncoder
    sec_mean: np.ndarray
    sec_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    criteria: OrganCriteria = DEFAULT_CRITERIA
    stats_rows: tuple[int, ...] = ()

    @classmethod
    def fit(
        cls,
        records: Sequence[SampleRecord],
        row_ids: Sequence[int] = (),
        criteria: OrganCriteria = DEFAULT_CRITERIA,
    ) -> "Preprocessor":
        records = list(records)
        primary = PrimaryEncoder.fit(records, row_ids)
        sec_mean, sec_std = _zscore_stats(secondary_matrix(records, criteria))
        y_mean, y_std = _zscore_stats(targets_matrix(records))
        return cls(primary, sec_mean, sec_std, y_mean, y_std, criteria, tuple(row_ids))

    def inputs(self, records: Sequence[SampleRecord]) -> tuple[np.ndarray, np.ndarray]:
        x = self.primary.transform(records)
        xt = _apply_zscore(secondary_matrix(records, self.criteria), self.sec_mean, self.sec_std)
        return x, xt

    def tree_inputs(self, records: Sequence[SampleRecord]) -> np.ndarray:
        return np.hstack(self.inputs(records))

    def scale_y(self, y: np.ndarray) -> np.ndarray:
        return _apply_zscore(np.atleast_2d(np.asarray(y, dtype=np.float64)), self.y_mean, self.y_std)

    def unscale_y(self, y_scaled: np.ndarray) -> np.ndarray:
        return np.asarray(y_scaled) * np.where(self.y_std > 0, self.y_std, 1.0) + self.y_mean

    def arrays(self, records: Sequence[SampleRecord]) -> Arrays:
        x, xt = self.inputs(records)
        return Arrays(x, xt, self.scale_y(targets_matrix(records)))

    def tensors(self) -> dict[str, np.ndarray]:
        """Fitted statistics as named arrays (for checkpoints)."""
        return {
            "prep.primary_mean": self.primary.mean,
            "prep.primary_std": self.primary.std,
            "prep.sec_mean": self.sec_mean,
            "prep.sec_std": self.sec_std,
            "prep.y_mean": self.y_mean,
            "prep.y_std": self.y_std,
        }

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray], criteria: OrganCriteria = DEFAULT_CRITERIA) -> "Preprocessor":
        return cls(
            PrimaryEncoder(t["prep.primary_mean"], t["prep.primary_std"]),
            t["prep.sec_mean"], t["prep.sec_std"], t["prep.y_mean"], t["prep.y_std"], criteria,
        )
