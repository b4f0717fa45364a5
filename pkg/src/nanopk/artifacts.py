"""Saving and restoring trained networks together with their preprocessing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .autodiff import load_tensors, save_tensors
from .errors import BadCheckpoint, NanopkError
from .models import MultiviewConfig, build_net
from .pipeline import Preprocessor
from .priors import DEFAULT_CRITERIA, OrganCriteria

FORMAT = "nanopk-dnn/1"


def save_network(path: str | Path, model, prep: Preprocessor | None, label: str = "DNN") -> None:
    tensors = dict(model.store.state_dict())
    if prep is not None:
        tensors.update(prep.tensors())
    meta = {"format": FORMAT, "label": label, "kind": model.kind, "d": model.d,
            "config": model.cfg.to_dict(), "has_preprocessing": prep is not None}
    save_tensors(path, tensors, meta)


def load_network(path: str | Path, criteria: OrganCriteria = DEFAULT_CRITERIA):
    """Return ``(model, prep, meta)``; ``prep`` is None when not stored."""
    tensors, meta = load_tensors(path)
    if meta.get("format") != FORMAT:
        raise BadCheckpoint(f"{path}: not a network checkpoint")
    try:
        cfg = MultiviewConfig.from_dict(meta["config"])
        model = build_net(meta["kind"], cfg, int(meta["d"]))
        prep = None
        if meta.get("has_preprocessing"):
            prep = Preprocessor.from_tensors(tensors, criteria)
        state = {k: v for k, v in tensors.items() if not k.startswith("prep.")}
        model.store.load_state_dict(state)
    except (KeyError, TypeError, ValueError, NanopkError) as exc:
        raise BadCheckpoint(f"{path}: inconsistent checkpoint ({exc})") from exc
    # a restored network is no longer fresh
    model.steps = -1
    return model, prep, meta


def all_finite(model) -> bool:
    return all(np.all(np.isfinite(t.data)) for _, t in model.store.items())
