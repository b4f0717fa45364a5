"""Tumor-delivery kinetics prediction for nanoparticles from tabular data.

Subpackages: ``autodiff`` (reverse-mode engine), ``models`` (multi-view
attention network, MLP baseline, trees), ``eval`` (metrics, cross-validation,
significance tests, saliency). The command-line tool lives in ``cli``.
"""

from .dataset import TARGET_LABELS, CleanDataset, SampleRecord, clean, load_dataset
from .errors import ConfigError, DataError, NanopkError, NumericError

__version__ = "0.1.0"

__all__ = [
    "TARGET_LABELS",
    "CleanDataset",
    "SampleRecord",
    "clean",
    "load_dataset",
    "NanopkError",
    "ConfigError",
    "DataError",
    "NumericError",
    "__version__",
]
