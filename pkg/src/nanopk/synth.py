"""Synthetic, schema-conformant datasets with a known planted signal.

Each target is linear in a fixed design vector built from raw fields::

    1, ln HD, ZP/100, ln TW, TSiz, ln Dose, BW/10, charge_num,
    [Shape=Rod], [Shape=Plate], [TS=Active], ln HD * charge_num

plus Gaussian noise whose standard deviation is ``noise`` times the
standard deviation of that target's noiseless signal over the sample.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import TARGETS, VOCAB, SampleRecord
from .features import CHARGE_NUM

DESIGN_COLUMNS = (
    "intercept", "ln_hd", "zp_100", "ln_tw", "tsiz", "ln_dose", "bw_10",
    "charge_num", "shape_rod", "shape_plate", "ts_active", "ln_hd_x_charge",
)

# rows follow DESIGN_COLUMNS, columns follow TARGETS
PLANTED = np.array([
    [4.0, 1.0, 10.0, 3.0],
    [-0.6, 0.2, 5.0, -0.5],
    [0.8, -0.3, -6.0, 0.6],
    [0.5, 0.1, 4.0, -0.4],
    [-1.0, 0.6, 8.0, 0.9],
    [0.3, -0.1, -2.0, 0.2],
    [0.2, 0.05, 1.5, -0.1],
    [0.9, -0.4, 3.0, 0.5],
    [0.7, 0.3, -4.0, -0.3],
    [-0.5, 0.2, 6.0, 0.4],
    [0.6, -0.2, 5.0, 0.7],
    [-0.3, 0.15, 2.0, -0.2],
])


@dataclass(frozen=True)
class SynthConfig:
    n: int = 280
    noise: float = 0.3
    seed: int = 0


def design_matrix(records) -> np.ndarray:
    rows = []
    for r in records:
        q = CHARGE_NUM[r.charge]
        lhd = np.log(r.hd)
        rows.append([
            1.0, lhd, r.zp / 100.0, np.log(r.tw), r.tsiz, np.log(r.dose), r.bw / 10.0, q,
            float(r.shape == "Rod"), float(r.shape == "Plate"), float(r.ts == "Active"), lhd * q,
        ])
    return np.asarray(rows, dtype=np.float64)


def _log_uniform(rng, lo, hi, size):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def generate(cfg: SynthConfig = SynthConfig()) -> tuple[list[SampleRecord], np.ndarray]:
    """Return ``(records, signal)`` where ``signal`` is the noiseless target matrix."""
    if cfg.n < 1 or cfg.noise < 0:
        raise ValueError("need n >= 1 and noise >= 0")
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n

    def pick(name):
        vocab = VOCAB[name]
        return [vocab[i] for i in rng.integers(0, len(vocab), n)]

    cats = {name: pick(name) for name in ("type_np", "mat", "shape", "charge", "ts", "tm", "ct")}
    hd = _log_uniform(rng, 5.0, 456.0, n)
    zp = rng.uniform(0.5, 60.0, n)
    tw = _log_uniform(rng, 0.02, 5.09, n)
    tsiz = rng.uniform(0.02, 1.8, n)
    dose = _log_uniform(rng, 0.001, 1220.0, n)
    bw = rng.uniform(16.0, 35.0, n)
    noise_draw = rng.standard_normal((n, len(TARGETS)))

    base = [
        SampleRecord(
            **{k: v[i] for k, v in cats.items()},
            hd=float(hd[i]), zp=float(zp[i]), tw=float(tw[i]), tsiz=float(tsiz[i]),
            dose=float(dose[i]), bw=float(bw[i]), ar="IV",
        )
        for i in range(n)
    ]
    signal = design_matrix(base) @ PLANTED
    sd = signal.std(axis=0) if n > 1 else np.zeros(len(TARGETS))
    y = signal + cfg.noise * sd * noise_draw
    records = [
        replace(rec, **{t: float(y[i, j]) for j, t in enumerate(TARGETS)})
        for i, rec in enumerate(base)
    ]
    return records, signal
