"""Leakage-free cross-validation and hold-out evaluation of model rosters.

For every fold, everything is rebuilt from scratch: the fold's training
portion is split into inner-train / inner-val, SMOTE runs on inner-train,
standardization statistics come from inner-train, networks early-stop on
inner-val, trees fit on inner-train and ensemble weights fit on inner-val.
The held-out fold is touched only for the final evaluation. All row reads go
through a :class:`ProvenanceLog` so the last claim can be audited.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..augment import AugmentConfig, augment_records
from ..dataset import TARGET_LABELS, CleanDataset, FoldPlan, SplitPlan, inner_split, targets_matrix
from ..ensemble import EnsembleWeights, ensemble_predict, fit_weights
from ..errors import AllZeroDifferences, BadConfig, TooFewPairs
from ..models import (
    ForestConfig,
    GbtConfig,
    MultiviewConfig,
    fit_forest,
    fit_gbt,
    hyperparameter_search,
)
from ..pipeline import Preprocessor
from ..priors import DEFAULT_CRITERIA, OrganCriteria
from .metrics import metric_pair, rmse
from .wilcoxon import wilcoxon_one_sided

log = logging.getLogger(__name__)

# network label -> (network kind, input view)
NETWORKS = {
    "DNN": ("multiview", "multiview"),
    "DNN Primary": ("multiview", "primary"),
    "DNN Secondary": ("multiview", "secondary"),
    "MLP": ("mlp", "multiview"),
}
TREES = ("XGB", "RF")
ENSEMBLES = {
    "DNN+XGB": ("DNN", "XGB"),
    "DNN+RF": ("DNN", "RF"),
    "DNN+XGB+RF": ("DNN", "XGB", "RF"),
}
MODEL_LABELS = tuple(NETWORKS) + TREES + tuple(ENSEMBLES)
PROPOSED = "DNN+XGB+RF"

ROSTERS = {
    "ensemble": ("DNN", "XGB", "RF", "DNN+XGB", "DNN+RF", "DNN+XGB+RF"),
    "benchmark": ("RF", "XGB", "MLP", "DNN", "DNN+XGB+RF"),
    "ablation": ("DNN Primary", "DNN Secondary", "DNN", "DNN+XGB", "DNN+RF", "DNN+XGB+RF"),
    "full": ("RF", "XGB", "MLP", "DNN Primary", "DNN Secondary", "DNN",
             "DNN+XGB", "DNN+RF", "DNN+XGB+RF"),
}
DEFAULT_ROSTER = "ensemble"

# purposes under which a row may legitimately be read from the held-out set
EVAL_PURPOSES = frozenset({"test_eval"})


def resolve_roster(selection: str | Sequence[str]) -> tuple[str, ...]:
    """A roster name, a single model label, or a comma-separated list of labels."""
    if not isinstance(selection, str):
        labels = tuple(selection)
    elif selection in ROSTERS:
        return ROSTERS[selection]
    else:
        labels = tuple(s.strip() for s in selection.split(",") if s.strip())
    unknown = [m for m in labels if m not in MODEL_LABELS]
    if unknown or not labels:
        raise BadConfig(f"unknown roster entries {unknown}; choose from {list(ROSTERS)} "
                        f"or {list(MODEL_LABELS)}")
    return tuple(dict.fromkeys(labels))


def base_models(roster: Sequence[str]) -> tuple[str, ...]:
    """Non-ensemble models the roster needs, in canonical order."""
    need = set()
    for m in roster:
        need.update(ENSEMBLES.get(m, (m,)))
    return tuple(m for m in MODEL_LABELS if m in need and m not in ENSEMBLES)


@dataclass(frozen=True)
class CVSettings:
    dnn: MultiviewConfig = MultiviewConfig()
    budget: int = 10
    # optimizers the search may draw; None lets it draw both
    search_optimizers: tuple[str, ...] | None = ("adam",)
    forest: ForestConfig = ForestConfig()
    gbt: GbtConfig = GbtConfig()
    augment: AugmentConfig = AugmentConfig()
    criteria: OrganCriteria = DEFAULT_CRITERIA
    grid_step: float = 0.05

    def to_dict(self) -> dict:
        return {
            "dnn": self.dnn.to_dict(),
            "budget": self.budget,
            "search_optimizers": list(self.search_optimizers) if self.search_optimizers else None,
            "forest": self.forest.__dict__.copy(),
            "gbt": self.gbt.__dict__.copy(),
            "augment": self.augment.__dict__.copy(),
            "grid_step": self.grid_step,
        }


class ProvenanceLog:
    """Records which dataset rows each stage of each fold read."""

    def __init__(self):
        self.events: list[tuple[str, str, frozenset[int]]] = []

    def read(self, data: CleanDataset, scope: str, purpose: str, idx: Sequence[int]) -> list:
        idx = [int(i) for i in idx]
        self.events.append((scope, purpose, frozenset(idx)))
        return [data.records[i] for i in idx]

    def note(self, scope: str, purpose: str, idx) -> None:
        self.events.append((scope, purpose, frozenset(int(i) for i in idx)))

    def purposes(self, scope: str) -> set[str]:
        return {p for s, p, _ in self.events if s == scope}

    def rows(self, scope: str, purpose: str) -> frozenset[int]:
        out: set[int] = set()
        for s, p, ids in self.events:
            if s == scope and p == purpose:
                out |= ids
        return frozenset(out)

    def violations(self, scope: str, held_out: Sequence[int]) -> dict[str, list[int]]:
        """Held-out rows read for any purpose other than final evaluation."""
        held = set(int(i) for i in held_out)
        bad: dict[str, set[int]] = {}
        for s, p, ids in self.events:
            if s == scope and p not in EVAL_PURPOSES and ids & held:
                bad.setdefault(p, set()).update(ids & held)
        return {p: sorted(v) for p, v in bad.items()}


@dataclass
class FoldResult:
    scope: str
    train_idx: tuple[int, ...]
    val_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    metrics: dict[str, list]  # label -> MetricPair per output
    val_rmse: dict[str, list[float]]
    weights: dict[str, EnsembleWeights]
    test_pred: dict[str, np.ndarray]
    y_test: np.ndarray
    search: dict[str, dict]
    n_synthetic: int
    smote_warning: str | None
    violations: dict[str, list[int]]
    models: dict = field(default_factory=dict, repr=False)
    prep: Preprocessor | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "n_train": len(self.train_idx),
            "n_val": len(self.val_idx),
            "n_test": len(self.test_idx),
            "n_synthetic": self.n_synthetic,
            "smote_warning": self.smote_warning,
            "test_idx": list(self.test_idx),
            "metrics": {m: {o: p.to_dict() for o, p in zip(TARGET_LABELS, v)}
                        for m, v in self.metrics.items()},
            "inner_val_rmse": {m: dict(zip(TARGET_LABELS, v)) for m, v in self.val_rmse.items()},
            "ensemble_weights": {m: w.to_dict() for m, w in self.weights.items()},
            "search": self.search,
            "leakage_violations": self.violations,
        }


@dataclass(frozen=True)
class FoldSeeds:
    split: int
    smote: int
    search: dict[str, int]
    forest: tuple[int, ...]
    gbt: tuple[int, ...]

    @classmethod
    def from_sequence(cls, seq: np.random.SeedSequence) -> "FoldSeeds":
        split, smote, search, forest, gbt = seq.spawn(5)

        def ints(s, k):
            return tuple(int(v) for v in s.generate_state(k, dtype=np.uint32))

        search_ints = ints(search, len(MODEL_LABELS))
        return cls(
            ints(split, 1)[0],
            ints(smote, 1)[0],
            dict(zip(MODEL_LABELS, search_ints)),
            ints(forest, len(TARGET_LABELS)),
            ints(gbt, len(TARGET_LABELS)),
        )


def fit_and_evaluate(
    data: CleanDataset,
    train_idx: Sequence[int],
    val_idx: Sequence[int],
    test_idx: Sequence[int],
    roster: Sequence[str],
    settings: CVSettings,
    seeds: FoldSeeds,
    log_: ProvenanceLog,
    scope: str,
    keep_models: bool = False,
) -> FoldResult:
    """Fit every model the roster needs on (train, val) and score on test."""
    roster = resolve_roster(roster)
    if set(train_idx) & set(test_idx) or set(val_idx) & set(test_idx) or set(train_idx) & set(val_idx):
        raise BadConfig("train, validation and test indices must be disjoint")
    train_records = log_.read(data, scope, "standardize", train_idx)
    prep = Preprocessor.fit(train_records, train_idx, settings.criteria)

    aug_cfg = replace(settings.augment, seed=seeds.smote)
    aug = augment_records(log_.read(data, scope, "smote", train_idx), aug_cfg, row_ids=train_idx)
    if aug.result is not None:
        log_.note(scope, "smote_seed", [o[0] for o in aug.origin if len(o) == 2])
    fit_ids = sorted({i for o in aug.origin for i in o})

    train_arr = prep.arrays(aug.records)
    val_records = log_.read(data, scope, "early_stopping", val_idx)
    val_arr = prep.arrays(val_records)
    y_val = targets_matrix(val_records)
    test_records = log_.read(data, scope, "test_eval", test_idx)
    y_test = targets_matrix(test_records)
    x_test, xt_test = prep.inputs(test_records)

    preds_val: dict[str, np.ndarray] = {}
    preds_test: dict[str, np.ndarray] = {}
    search_info: dict[str, dict] = {}
    models: dict = {}
    bases = base_models(roster)

    for label in bases:
        if label in NETWORKS:
            kind, view = NETWORKS[label]
            log_.note(scope, "dnn_train", fit_ids)
            res = hyperparameter_search(
                kind, settings.dnn.with_(view=view), settings.budget, seeds.search[label],
                train_arr, val_arr, settings.search_optimizers,
            )
            model = res.best.model
            preds_val[label] = prep.unscale_y(model.predict(val_arr.x, val_arr.xt))
            preds_test[label] = prep.unscale_y(model.predict(x_test, xt_test))
            search_info[label] = {
                "best_config": res.best_config.to_dict(),
                "best_epoch": res.best.best_epoch,
                "trials": [{k: t[k] for k in ("trial", "val_rmse", "epochs")} for t in res.trials],
            }
            models[label] = model
            log.info("%s %s: best inner-val rmse %.4f", scope, label, res.best.best_val_rmse)

    tree_labels = [m for m in bases if m in TREES]
    if tree_labels:
        log_.note(scope, "tree_fit", fit_ids)
        x_tr = prep.tree_inputs(aug.records)
        y_tr = targets_matrix(aug.records)
        x_val = np.hstack([val_arr.x, val_arr.xt])
        x_te = np.hstack([x_test, xt_test])
        for label in tree_labels:
            fitted = []
            for o in range(len(TARGET_LABELS)):
                if label == "RF":
                    fitted.append(fit_forest(x_tr, y_tr[:, o], replace(settings.forest, seed=seeds.forest[o])))
                else:
                    fitted.append(fit_gbt(x_tr, y_tr[:, o], replace(settings.gbt, seed=seeds.gbt[o])))
            preds_val[label] = np.column_stack([t.predict(x_val) for t in fitted])
            preds_test[label] = np.column_stack([t.predict(x_te) for t in fitted])
            models[label] = fitted

    weights: dict[str, EnsembleWeights] = {}
    for label in roster:
        if label in ENSEMBLES:
            members = ENSEMBLES[label]
            log_.note(scope, "ensemble_weights", val_idx)
            w = fit_weights([preds_val[m] for m in members], y_val, settings.grid_step, members)
            weights[label] = w
            preds_val[label] = ensemble_predict([preds_val[m] for m in members], w)
            preds_test[label] = ensemble_predict([preds_test[m] for m in members], w)

    metrics = {
        m: [metric_pair(y_test[:, o], preds_test[m][:, o]) for o in range(len(TARGET_LABELS))]
        for m in roster
    }
    val_scores = {
        m: [rmse(y_val[:, o], preds_val[m][:, o]) for o in range(len(TARGET_LABELS))]
        for m in preds_val
    }
    return FoldResult(
        scope=scope,
        train_idx=tuple(int(i) for i in train_idx),
        val_idx=tuple(int(i) for i in val_idx),
        test_idx=tuple(int(i) for i in test_idx),
        metrics=metrics,
        val_rmse=val_scores,
        weights=weights,
        test_pred={m: preds_test[m] for m in roster},
        y_test=y_test,
        search=search_info,
        n_synthetic=aug.n_synthetic,
        smote_warning=aug.result.warning if aug.result is not None else None,
        violations=log_.violations(scope, test_idx),
        models=models if keep_models else {},
        prep=prep if keep_models else None,
    )


def _aggregate(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std}


@dataclass
class CVReport:
    k: int
    roster: tuple[str, ...]
    folds: list[FoldResult]
    seed: int
    settings: CVSettings
    p_values: dict[str, dict] = field(default_factory=dict)

    def aggregate(self) -> dict:
        out = {}
        for m in self.roster:
            out[m] = {}
            for o, label in enumerate(TARGET_LABELS):
                out[m][label] = {
                    "r2": _aggregate([f.metrics[m][o].r2 for f in self.folds]),
                    "rmse": _aggregate([f.metrics[m][o].rmse for f in self.folds]),
                }
        return out

    def mean_r2(self, model: str) -> np.ndarray:
        return np.array([np.mean([f.metrics[model][o].r2 for f in self.folds])
                         for o in range(len(TARGET_LABELS))])

    def leakage_ok(self) -> bool:
        return all(not f.violations for f in self.folds)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "roster": list(self.roster),
            "outputs": list(TARGET_LABELS),
            "config": self.settings.to_dict(),
            "aggregate": self.aggregate(),
            "p_values": self.p_values,
            "leakage_audit_passed": self.leakage_ok(),
            "folds": [f.to_dict() for f in self.folds],
        }

    def metric_rows(self) -> list[list]:
        rows = []
        for i, f in enumerate(self.folds):
            for m in self.roster:
                for o, label in enumerate(TARGET_LABELS):
                    p = f.metrics[m][o]
                    rows.append([i, m, label, repr(p.r2), repr(p.rmse)])
        return rows

    def write(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / "cv_report.json", out_dir / "cv_folds.csv", out_dir / "cv_summary.csv"]
        paths[0].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        with paths[1].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "model", "output", "r2", "rmse"])
            w.writerows(self.metric_rows())
        with paths[2].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "output", "r2_mean", "r2_std", "rmse_mean", "rmse_std"])
            for m, per in self.aggregate().items():
                for label, s in per.items():
                    w.writerow([m, label, repr(s["r2"]["mean"]), repr(s["r2"]["std"]),
                                repr(s["rmse"]["mean"]), repr(s["rmse"]["std"])])
        return paths


def pooled_squared_errors(folds: Sequence[FoldResult], model: str, output: int) -> np.ndarray:
    return np.concatenate([(f.test_pred[model][:, output] - f.y_test[:, output]) ** 2 for f in folds])


def significance(folds: Sequence[FoldResult], roster: Sequence[str], proposed: str = PROPOSED) -> dict:
    """One-sided test of ``proposed`` against the alternative with the lowest
    mean held-out RMSE, on per-sample squared errors pooled over folds."""
    if proposed not in roster or len(roster) < 2:
        return {}
    out = {}
    for o, label in enumerate(TARGET_LABELS):
        alts = [m for m in roster if m != proposed]
        best = min(alts, key=lambda m: np.mean([f.metrics[m][o].rmse for f in folds]))
        entry = {"proposed": proposed, "alternative": best}
        try:
            res = wilcoxon_one_sided(pooled_squared_errors(folds, proposed, o),
                                     pooled_squared_errors(folds, best, o))
            entry.update(p_value=res.p_value, n=res.n, method=res.method, w_plus=res.w_plus)
        except (TooFewPairs, AllZeroDifferences) as exc:
            entry.update(p_value=None, reason=str(exc))
        out[label] = entry
    return out


def run_cv(
    data: CleanDataset,
    plan: FoldPlan,
    roster: str | Sequence[str] = DEFAULT_ROSTER,
    settings: CVSettings = CVSettings(),
    seed: int = 0,
    provenance: ProvenanceLog | None = None,
    keep_models: bool = False,
) -> CVReport:
    roster = resolve_roster(roster)
    covered = sorted(i for f in plan.folds for i in f)
    if covered != list(range(len(data))):
        raise BadConfig("fold plan does not partition the dataset")
    provenance = provenance if provenance is not None else ProvenanceLog()
    fold_seqs = np.random.SeedSequence(seed).spawn(plan.k)
    folds = []
    for i in range(plan.k):
        seeds = FoldSeeds.from_sequence(fold_seqs[i])
        portion = plan.train_portion(i)
        provenance.note(f"fold{i}", "inner_split", portion)
        inner_tr, inner_val = inner_split(portion, plan.inner_val_fraction, seeds.split)
        log.info("fold %d/%d: %d inner-train, %d inner-val, %d test",
                 i + 1, plan.k, len(inner_tr), len(inner_val), len(plan.folds[i]))
        folds.append(fit_and_evaluate(data, inner_tr, inner_val, plan.folds[i], roster,
                                      settings, seeds, provenance, f"fold{i}", keep_models))
    return CVReport(plan.k, roster, folds, seed, settings, significance(folds, roster))


def run_holdout(
    data: CleanDataset,
    split: SplitPlan,
    roster: str | Sequence[str] = DEFAULT_ROSTER,
    settings: CVSettings = CVSettings(),
    seed: int = 0,
    provenance: ProvenanceLog | None = None,
    keep_models: bool = False,
) -> FoldResult:
    """Train on the training split, early-stop and weight on validation,
    score the test split once."""
    provenance = provenance if provenance is not None else ProvenanceLog()
    seeds = FoldSeeds.from_sequence(np.random.SeedSequence(seed).spawn(1)[0])
    return fit_and_evaluate(data, split.train_idx, split.val_idx, split.test_idx,
                            roster, settings, seeds, provenance, "holdout", keep_models)
