"""Loading, cleaning, encoding and splitting of the nanoparticle PK table."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AllRowsDropped,
    BadRatios,
    EmptyFile,
    MissingColumn,
    TooFewSamples,
    UnknownCategory,
)

# Vocabulary order fixes the one-hot column order.
VOCAB: dict[str, tuple[str, ...]] = {
    "type_np": ("Inorganic", "Organic", "Hybrid"),
    "mat": (
        "Gold",
        "Dendrimers",
        "Liposomes",
        "Polymeric",
        "Hydrogels",
        "Other Organic Material",
        "Other Inorganic Material",
    ),
    "shape": ("Spherical", "Rod", "Plate", "Others"),
    "charge": ("Positive", "Negative", "Neutral"),
    "ts": ("Passive", "Active"),
    "tm": (
        "Allograft Heterotopic",
        "Allograft Orthotopic",
        "Xenograft Heterotopic",
        "Xenograft Orthotopic",
    ),
    "ct": (
        "Brain",
        "Breast",
        "Cervix",
        "Colon",
        "Liver",
        "Lung",
        "Ovary",
        "Pancreas",
        "Prostate",
        "Skin",
    ),
    "ar": ("IV",),
}

CATEGORICAL = ("type_np", "mat", "shape", "charge", "ts", "tm", "ct", "ar")
ENCODED_CATEGORICAL = ("type_np", "mat", "shape", "charge", "ts", "tm", "ct")
NUMERIC = ("hd", "zp", "tw", "tsiz", "dose", "bw")
TARGETS = ("ktres_max", "ktres_n", "ktres_50", "ktres_release")
TARGET_LABELS = ("KTRESmax", "KTRESn", "KTRES50", "KTRESrelease")

# field name -> CSV header symbol
SYMBOLS: dict[str, str] = {
    "type_np": "Type",
    "mat": "MAT",
    "shape": "Shape",
    "hd": "HD",
    "zp": "ZP",
    "charge": "Charge",
    "ts": "TS",
    "tm": "TM",
    "ct": "CT",
    "tw": "TW",
    "tsiz": "TSiz",
    "dose": "Dose",
    "bw": "BW",
    "ar": "AR",
    "ktres_release": "KTRESrelease",
    "ktres_max": "KTRESmax",
    "ktres_n": "KTRESn",
    "ktres_50": "KTRES50",
}

# Documented value ranges, used by the ingest summary only.
TABLE_RANGES: dict[str, tuple[float, float]] = {
    "hd": (5, 456),
    "zp": (0, 274),
    "tw": (0.02, 5.09),
    "tsiz": (0.02, 1.8),
    "dose": (0.001, 1220),
    "bw": (16, 35),
    "ktres_release": (0.0001, 14),
    "ktres_max": (0.001, 25),
    "ktres_n": (0.01, 10),
    "ktres_50": (0.00001, 180),
}

_CANONICAL = {
    name: {v.casefold(): v for v in values} for name, values in VOCAB.items()
}


@dataclass(frozen=True)
class SampleRecord:
    """One raw row. Any field may be ``None`` (missing)."""

    type_np: str | None = None
    mat: str | None = None
    shape: str | None = None
    hd: float | None = None
    zp: float | None = None
    charge: str | None = None
    ts: str | None = None
    tm: str | None = None
    ct: str | None = None
    tw: float | None = None
    tsiz: float | None = None
    dose: float | None = None
    bw: float | None = None
    ar: str | None = None
    ktres_release: float | None = None
    ktres_max: float | None = None
    ktres_n: float | None = None
    ktres_50: float | None = None

    def is_complete(self) -> bool:
        for name in CATEGORICAL:
            value = getattr(self, name)
            if value is None or value not in VOCAB[name]:
                return False
        for name in NUMERIC + TARGETS:
            value = getattr(self, name)
            if value is None or not math.isfinite(value):
                return False
        return all(getattr(self, n) > 0 for n in ("hd", "tw", "tsiz"))

    def numeric_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in NUMERIC], dtype=np.float64)

    def target_vector(self) -> np.ndarray:
        """Targets in the fixed order (KTRESmax, KTRESn, KTRES50, KTRESrelease)."""
        return np.array([getattr(self, n) for n in TARGETS], dtype=np.float64)


FIELD_NAMES = tuple(f.name for f in fields(SampleRecord))


@dataclass(frozen=True)
class CleanDataset:
    records: tuple[SampleRecord, ...]
    source: str = ""
    row_indices: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, idx: Iterable[int]) -> "CleanDataset":
        idx = list(idx)
        rows = self.row_indices or tuple(range(len(self.records)))
        return CleanDataset(
            tuple(self.records[i] for i in idx),
            self.source,
            tuple(rows[i] for i in idx),
        )

    def targets(self) -> np.ndarray:
        return targets_matrix(self.records)


def targets_matrix(records: Sequence[SampleRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, len(TARGETS)))
    return np.vstack([r.target_vector() for r in records])


def numeric_matrix(records: Sequence[SampleRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, len(NUMERIC)))
    return np.vstack([r.numeric_vector() for r in records])


def _parse_float(text: str) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _parse_category(name: str, text: str) -> str | None:
    text = " ".join(text.split())
    if not text:
        return None
    # unknown values are kept verbatim so clean() can drop them
    return _CANONICAL[name].get(text.casefold(), text)


def load_dataset(path: str | Path) -> list[SampleRecord]:
    """Read the CSV table; unparseable cells become missing values.

    Header names are matched case-insensitively against the column symbols
    (``Type, MAT, Shape, HD, ...``). Extra columns are ignored.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: file is empty") from None
        lookup = {h.strip().casefold(): i for i, h in enumerate(header)}
        columns: dict[str, int] = {}
        missing = []
        for name, symbol in SYMBOLS.items():
            if symbol.casefold() in lookup:
                columns[name] = lookup[symbol.casefold()]
            else:
                missing.append(symbol)
        if missing:
            raise MissingColumn(f"{path}: missing columns {', '.join(missing)}")

        records = []
        for row in reader:
            if not any(cell.strip() for cell in row):
                continue
            values = {}
            for name, col in columns.items():
                text = row[col] if col < len(row) else ""
                if name in CATEGORICAL:
                    values[name] = _parse_category(name, text)
                else:
                    values[name] = _parse_float(text)
            records.append(SampleRecord(**values))
    return records


def write_dataset(path: str | Path, records: Sequence[SampleRecord]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([SYMBOLS[n] for n in FIELD_NAMES])
        for rec in records:
            row = []
            for name in FIELD_NAMES:
                value = getattr(rec, name)
                if value is None:
                    row.append("")
                elif isinstance(value, float):
                    row.append(repr(value))
                else:
                    row.append(value)
            writer.writerow(row)


def clean(
    records: Sequence[SampleRecord] | CleanDataset, source: str = ""
) -> CleanDataset:
    """Drop every record with a missing, non-finite or out-of-vocabulary field."""
    if isinstance(records, CleanDataset):
        source = source or records.source
        origin = records.row_indices or tuple(range(len(records)))
        records = records.records
    else:
        origin = tuple(range(len(records)))
    keep = [i for i, rec in enumerate(records) if rec.is_complete()]
    if records and not keep:
        raise AllRowsDropped(f"all {len(records)} rows have missing values")
    return CleanDataset(
        tuple(records[i] for i in keep), source, tuple(origin[i] for i in keep)
    )


def _zscore_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    return mean, std


def _apply_zscore(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=np.float64)
    ok = std > 0
    # zero-variance columns are emitted as 0.0
    out[:, ok] = (values[:, ok] - mean[ok]) / std[ok]
    return out


def primary_column_names() -> list[str]:
    names = []
    for cat in ENCODED_CATEGORICAL:
        names.extend(f"{SYMBOLS[cat]}={v}" for v in VOCAB[cat])
    names.extend(SYMBOLS[n] for n in NUMERIC)
    return names


PRIMARY_COLUMNS = tuple(primary_column_names())


def one_hot(records: Sequence[SampleRecord]) -> np.ndarray:
    width = sum(len(VOCAB[c]) for c in ENCODED_CATEGORICAL)
    out = np.zeros((len(records), width))
    for i, rec in enumerate(records):
        offset = 0
        for cat in ENCODED_CATEGORICAL:
            vocab = VOCAB[cat]
            value = getattr(rec, cat)
            if value not in vocab:
                raise UnknownCategory(f"{SYMBOLS[cat]}={value!r} not in {vocab}")
            out[i, offset + vocab.index(value)] = 1.0
            offset += len(vocab)
    return out


@dataclass(frozen=True)
class PrimaryEncoder:
    """One-hot categoricals plus z-scored numerics (fitted statistics)."""

    mean: np.ndarray
    std: np.ndarray
    stats_rows: tuple[int, ...] = ()

    @classmethod
    def fit(cls, records: Sequence[SampleRecord], stats_rows=()) -> "PrimaryEncoder":
        if not records:
            raise TooFewSamples("cannot fit encoder statistics on zero rows")
        mean, std = _zscore_stats(numeric_matrix(records))
        return cls(mean, std, tuple(stats_rows))

    def transform(self, records: Sequence[SampleRecord]) -> np.ndarray:
        num = _apply_zscore(numeric_matrix(records), self.mean, self.std)
        return np.hstack([one_hot(records), num])

    @property
    def column_names(self) -> tuple[str, ...]:
        return PRIMARY_COLUMNS


@dataclass(frozen=True)
class EncodedSamples:
    x: np.ndarray
    column_names: tuple[str, ...]
    encoder: PrimaryEncoder


def encode(data: CleanDataset, stats_source: Sequence[int]) -> EncodedSamples:
    """Encode every record; z-score statistics come from ``stats_source`` rows only."""
    stats_source = list(stats_source)
    if not stats_source:
        raise TooFewSamples("stats_source is empty")
    stats_records = [data.records[i] for i in stats_source]
    encoder = PrimaryEncoder.fit(stats_records, stats_source)
    return EncodedSamples(encoder.transform(data.records), PRIMARY_COLUMNS, encoder)


@dataclass(frozen=True)
class SplitPlan:
    train_idx: tuple[int, ...]
    val_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[tuple[int, ...], ...]
    seed: int
    inner_val_fraction: float = 0.2

    def train_portion(self, fold: int) -> tuple[int, ...]:
        return tuple(sorted(i for j, f in enumerate(self.folds) if j != fold for i in f))


def make_holdout_split(
    n: int, ratios: tuple[float, float, float] = (0.6, 0.2, 0.2), seed: int = 0
) -> SplitPlan:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise BadRatios(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    if n < 5:
        raise TooFewSamples(f"need at least 5 samples for a holdout split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * ratios[1]))
    n_val = min(n_val, n - n_train)
    return SplitPlan(
        tuple(int(i) for i in perm[:n_train]),
        tuple(int(i) for i in perm[n_train : n_train + n_val]),
        tuple(int(i) for i in perm[n_train + n_val :]),
        seed,
    )


def make_cv_folds(
    n: int, k: int = 5, seed: int = 0, inner_val_fraction: float = 0.2
) -> FoldPlan:
    if k < 2:
        raise BadRatios(f"k must be at least 2, got {k}")
    if n < k:
        raise TooFewSamples(f"cannot make {k} folds from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    folds = tuple(tuple(int(i) for i in part) for part in np.array_split(perm, k))
    return FoldPlan(k, folds, seed, inner_val_fraction)


def inner_split(
    indices: Sequence[int], val_fraction: float, seed: int
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Carve a validation subset out of a fold's training portion."""
    indices = np.asarray(sorted(indices))
    if len(indices) < 2:
        raise TooFewSamples("inner split needs at least 2 rows")
    perm = np.random.default_rng(seed).permutation(len(indices))
    n_val = min(max(1, int(round(len(indices) * val_fraction))), len(indices) - 1)
    val = indices[np.sort(perm[:n_val])]
    train = indices[np.sort(perm[n_val:])]
    return tuple(int(i) for i in train), tuple(int(i) for i in val)


def summarize(records: Sequence[SampleRecord], cleaned: CleanDataset) -> dict:
    """Row counts and per-column ranges compared with the documented ranges."""
    columns = {}
    for name in NUMERIC + TARGETS:
        vals = [getattr(r, name) for r in cleaned.records]
        lo, hi = TABLE_RANGES[name]
        entry = {"documented": [lo, hi]}
        if vals:
            entry["observed"] = [min(vals), max(vals)]
            entry["outside_documented"] = sum(1 for v in vals if v < lo or v > hi)
        columns[SYMBOLS[name]] = entry
    return {
        "loaded": len(records),
        "retained": len(cleaned),
        "dropped": len(records) - len(cleaned),
        "columns": columns,
    }


def with_values(record: SampleRecord, **changes) -> SampleRecord:
    return replace(record, **changes)
