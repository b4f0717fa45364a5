"""Gradient saliency of the four outputs with respect to both input views."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import Tensor
from ..dataset import PRIMARY_COLUMNS, TARGET_LABELS
from ..errors import ShapeMismatch
from ..features import SECONDARY_COLUMNS


@dataclass(frozen=True)
class SaliencyReport:
    """``primary[o, j]`` and ``secondary[o, j]`` are normalised scores.

    ``raw_*`` hold the unnormalised mean absolute gradients. A channel whose
    gradients are all zero for an output stays all zero and is listed in
    ``zero_channels``.
    """

    primary: np.ndarray
    secondary: np.ndarray
    raw_primary: np.ndarray
    raw_secondary: np.ndarray
    primary_columns: tuple[str, ...] = PRIMARY_COLUMNS
    secondary_columns: tuple[str, ...] = SECONDARY_COLUMNS
    outputs: tuple[str, ...] = TARGET_LABELS

    @property
    def zero_channels(self) -> list[tuple[str, str]]:
        out = []
        for o, label in enumerate(self.outputs):
            if not self.raw_primary[o].any():
                out.append((label, "primary"))
            if not self.raw_secondary[o].any():
                out.append((label, "secondary"))
        return out

    @property
    def degenerate(self) -> bool:
        return bool(self.zero_channels)

    def to_dict(self) -> dict:
        return {
            "outputs": list(self.outputs),
            "primary_columns": list(self.primary_columns),
            "secondary_columns": list(self.secondary_columns),
            "primary": self.primary.tolist(),
            "secondary": self.secondary.tolist(),
            "zero_channels": [list(z) for z in self.zero_channels],
        }

    def write_csv(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        paths = []
        for name, table, cols in (
            ("saliency_primary.csv", self.primary, self.primary_columns),
            ("saliency_secondary.csv", self.secondary, self.secondary_columns),
        ):
            path = out_dir / name
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["output", *cols])
                for label, row in zip(self.outputs, table):
                    w.writerow([label, *(repr(float(v)) for v in row)])
            paths.append(path)
        return paths[0], paths[1]


def input_gradients(model, x: np.ndarray, xt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample gradients ``d y_o / d x`` and ``d y_o / d xt`` in eval mode.

    Returns arrays of shape (4, B, d) and (4, B, 16). Eval mode makes rows
    independent, so summing an output over the batch before differentiating
    yields every row's own gradient.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xt = np.atleast_2d(np.asarray(xt, dtype=np.float64))
    if len(x) != len(xt) or len(x) == 0:
        raise ShapeMismatch("saliency needs the same non-zero number of rows in both views")
    tx = Tensor(x, requires_grad=True)
    txt = Tensor(xt, requires_grad=True)
    pred = model.forward(tx, txt, training=False)
    n_out = pred.shape[1]
    gx = np.zeros((n_out,) + x.shape)
    gxt = np.zeros((n_out,) + xt.shape)
    for o in range(n_out):
        tx.grad = None
        txt.grad = None
        pred[:, o].sum().backward()
        if tx.grad is not None:
            gx[o] = tx.grad
        if txt.grad is not None:
            gxt[o] = txt.grad
    model.store.zero_grad()
    return gx, gxt


def _normalize(raw: np.ndarray) -> np.ndarray:
    peak = raw.max(axis=1, keepdims=True)
    return np.divide(raw, peak, out=np.zeros_like(raw), where=peak > 0)


def saliency(model, x: np.ndarray, xt: np.ndarray) -> SaliencyReport:
    """Mean absolute input gradient per output, scaled so each channel's
    largest entry is 1."""
    gx, gxt = input_gradients(model, x, xt)
    raw_p = np.abs(gx).mean(axis=1)
    raw_s = np.abs(gxt).mean(axis=1)
    cols = PRIMARY_COLUMNS if raw_p.shape[1] == len(PRIMARY_COLUMNS) else tuple(
        f"x{j}" for j in range(raw_p.shape[1])
    )
    return SaliencyReport(_normalize(raw_p), _normalize(raw_s), raw_p, raw_s, cols)
