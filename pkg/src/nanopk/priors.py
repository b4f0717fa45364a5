"""Organ-level prior scores for nanoparticle size and surface charge.

Each organ contributes a 0/1 indicator; ``f_size`` and ``f_charge`` sum the
indicators over kidney, spleen, liver and lung. Only the 6 nm renal cut-off is
a sourced number; the other size bands are conventional defaults and can be
overridden through config keys ``priors.size.<organ>.{min,max}`` and
``priors.charge.<organ>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dataset import VOCAB, SampleRecord
from .errors import BadConfig, DomainError, UnknownOrgan

ORGANS = ("kidney", "spleen", "liver", "lung")
CHARGES = VOCAB["charge"]


@dataclass(frozen=True)
class SizeBand:
    """Half-open style predicate: ``min <= hd`` / ``hd < max`` bounds.

    ``min_inclusive``/``max_inclusive`` select closed ends, which the liver
    band needs.
    """

    min: float = -math.inf
    max: float = math.inf
    min_inclusive: bool = False
    max_inclusive: bool = False

    def contains(self, hd: float) -> bool:
        lo_ok = hd >= self.min if self.min_inclusive else hd > self.min
        hi_ok = hd <= self.max if self.max_inclusive else hd < self.max
        return lo_ok and hi_ok


def _default_sizes() -> dict[str, SizeBand]:
    return {
        "kidney": SizeBand(max=6.0),
        "lung": SizeBand(max=100.0),
        "liver": SizeBand(min=10.0, max=200.0, min_inclusive=True, max_inclusive=True),
        "spleen": SizeBand(min=200.0),
    }


def _default_charges() -> dict[str, frozenset[str]]:
    return {
        "liver": frozenset({"Positive"}),
        "spleen": frozenset({"Neutral", "Negative"}),
        "lung": frozenset({"Positive"}),
        "kidney": frozenset({"Neutral"}),
    }


@dataclass(frozen=True)
class OrganCriteria:
    size: dict[str, SizeBand] = field(default_factory=_default_sizes)
    charge: dict[str, frozenset[str]] = field(default_factory=_default_charges)

    def __post_init__(self):
        for organ in ORGANS:
            if organ not in self.size or organ not in self.charge:
                raise BadConfig(f"criteria missing organ {organ!r}")
        for organ, band in self.size.items():
            for bound in (band.min, band.max):
                if math.isfinite(bound) and bound <= 0:
                    raise BadConfig(f"size threshold for {organ} must be positive")
        for organ, allowed in self.charge.items():
            if not set(allowed) <= set(CHARGES):
                raise BadConfig(f"charge set for {organ} has unknown values {set(allowed) - set(CHARGES)}")

    @classmethod
    def from_config(cls, cfg: dict[str, str]) -> "OrganCriteria":
        """Apply ``priors.size.<organ>.min|max`` / ``priors.charge.<organ>`` overrides.

        Charge values are comma-separated; an empty value means no charge
        aligns with that organ. Overridden size bounds become inclusive.
        """
        base = cls()
        sizes = dict(base.size)
        charges = dict(base.charge)
        for key, value in cfg.items():
            parts = key.split(".")
            if parts[0] != "priors" or len(parts) < 3:
                continue
            organ = parts[2]
            if organ not in ORGANS:
                raise UnknownOrgan(f"unknown organ in config key {key!r}")
            if parts[1] == "size" and len(parts) == 4 and parts[3] in ("min", "max"):
                band = sizes[organ]
                bound = float(value) if value.strip() else (
                    -math.inf if parts[3] == "min" else math.inf
                )
                if parts[3] == "min":
                    band = SizeBand(bound, band.max, True, band.max_inclusive)
                else:
                    band = SizeBand(band.min, bound, band.min_inclusive, True)
                sizes[organ] = band
            elif parts[1] == "charge" and len(parts) == 3:
                items = [v.strip().capitalize() for v in value.split(",") if v.strip()]
                charges[organ] = frozenset(items)
            else:
                raise BadConfig(f"unrecognised priors key {key!r}")
        return cls(sizes, charges)


DEFAULT_CRITERIA = OrganCriteria()


def organ_size_score(hd: float, organ: str, criteria: OrganCriteria = DEFAULT_CRITERIA) -> int:
    if organ not in criteria.size:
        raise UnknownOrgan(organ)
    if not hd > 0:
        raise DomainError(f"hydrodynamic diameter must be positive, got {hd}")
    return int(criteria.size[organ].contains(hd))


def organ_charge_score(charge: str, organ: str, criteria: OrganCriteria = DEFAULT_CRITERIA) -> int:
    if organ not in criteria.charge:
        raise UnknownOrgan(organ)
    if charge not in CHARGES:
        raise DomainError(f"charge must be one of {CHARGES}, got {charge!r}")
    return int(charge in criteria.charge[organ])


def f_size(record: SampleRecord, criteria: OrganCriteria = DEFAULT_CRITERIA) -> int:
    return sum(organ_size_score(record.hd, organ, criteria) for organ in ORGANS)


def f_charge(record: SampleRecord, criteria: OrganCriteria = DEFAULT_CRITERIA) -> int:
    return sum(organ_charge_score(record.charge, organ, criteria) for organ in ORGANS)
