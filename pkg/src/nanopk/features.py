"""Engineered secondary view: two organ priors plus fourteen derived features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import SampleRecord
from .errors import DomainError
from .priors import DEFAULT_CRITERIA, OrganCriteria, f_charge, f_size

RATIO_EPS = 1e-6
LOG_EPS = 1e-9

# Arbitrary scalar codes used inside the interaction products.
CHARGE_NUM = {"Positive": 1.0, "Negative": -1.0, "Neutral": 0.0}
SHAPE_NUM = {"Spherical": 1.0, "Rod": 2.0, "Plate": 3.0, "Others": 4.0}

SECONDARY_COLUMNS = ("f_size", "f_charge") + tuple(f"f{i}" for i in range(1, 15))

FEATURE_DESCRIPTIONS = {
    "f_size": "organ size-alignment count",
    "f_charge": "organ charge-alignment count",
    "f1": "HD / TSiz",
    "f2": "HD / ZP",
    "f3": "HD / TW",
    "f4": "TW / TSiz",
    "f5": "ln TW",
    "f6": "TW^2",
    "f7": "ZP / HD",
    "f8": "HD * ZP * charge",
    "f9": "ZP * shape * charge",
    "f10": "TSiz^2",
    "f11": "ZP^2",
    "f12": "ln TSiz",
    "f13": "ln HD",
    "f14": "TSiz * HD",
}


def phi_ratio(a: float, b: float) -> float:
    """``a / b`` with ``|b|`` floored at 1e-6 (sign kept, zero treated as positive)."""
    sign = -1.0 if b < 0 else 1.0
    return a / (max(abs(b), RATIO_EPS) * sign)


def phi_log(a: float) -> float:
    shifted = a + LOG_EPS
    if not shifted > 0:
        raise DomainError(f"log undefined for {a}")
    return math.log(shifted)


def phi_polynomial(a: float) -> float:
    return a * a


def phi_interaction(*args: float) -> float:
    if not args:
        raise ValueError("phi_interaction needs at least one argument")
    return math.prod(args)


@dataclass(frozen=True)
class SecondaryFeatures:
    xt: np.ndarray
    column_names: tuple[str, ...] = SECONDARY_COLUMNS


def secondary_vector(record: SampleRecord, criteria: OrganCriteria = DEFAULT_CRITERIA) -> np.ndarray:
    hd, zp, tw, tsiz = record.hd, record.zp, record.tw, record.tsiz
    charge = CHARGE_NUM[record.charge]
    shape = SHAPE_NUM[record.shape]
    values = [
        f_size(record, criteria),
        f_charge(record, criteria),
        phi_ratio(hd, tsiz),
        phi_ratio(hd, zp),
        phi_ratio(hd, tw),
        phi_ratio(tw, tsiz),
        phi_log(tw),
        phi_polynomial(tw),
        phi_ratio(zp, hd),
        phi_interaction(hd, zp, charge),
        phi_interaction(zp, shape, charge),
        phi_polynomial(tsiz),
        phi_polynomial(zp),
        phi_log(tsiz),
        phi_log(hd),
        phi_interaction(tsiz, hd),
    ]
    out = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite secondary feature for {record}")
    return out


def extract_secondary(record: SampleRecord, criteria: OrganCriteria = DEFAULT_CRITERIA) -> SecondaryFeatures:
    return SecondaryFeatures(secondary_vector(record, criteria))


def secondary_matrix(
    records: Sequence[SampleRecord], criteria: OrganCriteria = DEFAULT_CRITERIA
) -> np.ndarray:
    if not records:
        return np.zeros((0, len(SECONDARY_COLUMNS)))
    return np.vstack([secondary_vector(r, criteria) for r in records])
