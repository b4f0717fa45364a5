"""Command-line entry point: ``nanopk <command> [--config FILE] [flags]``.

Configuration is a flat ``key = value`` text file; ``#`` starts a comment.
Command-line flags override file values. See README for the key list.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from dataclasses import fields, replace
from pathlib import Path

from .augment import AugmentConfig
from .dataset import (
    TARGET_LABELS,
    clean,
    load_dataset,
    make_cv_folds,
    make_holdout_split,
    summarize,
    write_dataset,
)
from .errors import BadConfig, ConfigError, DataError, NanopkError
from .features import SECONDARY_COLUMNS, secondary_matrix
from .models import ForestConfig, GbtConfig, MultiviewConfig, save_trees
from .priors import OrganCriteria

log = logging.getLogger("nanopk")

COMMANDS = ("ingest", "features", "synth", "train", "cv", "benchmark", "saliency")


# -- configuration

def read_config(path: str | Path | None) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise BadConfig(f"config file not found: {p}")
    out = {}
    for n, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"{p}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(value: str, default):
    if isinstance(default, bool):
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise BadConfig(f"expected a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(int(v) for v in value.split(","))
    if default is None:
        if value.lower() in ("", "none"):
            return None
        try:
            return int(value)
        except ValueError:
            return float(value)
    return value


def _section(cfg: dict[str, str], prefix: str, base):
    """Override dataclass ``base`` with ``prefix.<field>`` keys."""
    names = {f.name for f in fields(base)}
    changes = {}
    for key, value in cfg.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in names:
            raise BadConfig(f"unknown config key {key!r}")
        try:
            changes[name] = _coerce(value, getattr(base, name))
        except ValueError as exc:
            raise BadConfig(f"bad value for {key!r}: {value!r}") from exc
    try:
        return replace(base, **changes)
    except ValueError as exc:
        raise BadConfig(str(exc)) from exc


class RunConfig:
    """Resolved settings for one command invocation."""

    def __init__(self, raw: dict[str, str], args: argparse.Namespace):
        self.raw = dict(raw)
        for key in ("seed", "out", "roster", "budget", "dataset", "checkpoint"):
            value = getattr(args, key, None)
            if value is not None:
                self.raw[key] = str(value)
        get = self.raw.get
        try:
            self.seed = int(get("seed", "0"))
            self.budget = int(get("budget", "10"))
            self.k = int(get("cv.k", "5"))
            self.inner_val_fraction = float(get("cv.inner_val_fraction", "0.2"))
            self.ratios = tuple(float(v) for v in get("split.ratios", "0.6,0.2,0.2").split(","))
            self.grid_step = float(get("ensemble.grid_step", "0.05"))
            self.synth_n = int(get("synth.n", "280"))
            self.synth_noise = float(get("synth.noise", "0.3"))
        except ValueError as exc:
            raise BadConfig(f"malformed numeric setting: {exc}") from exc
        self.out = Path(get("out", "nanopk_out"))
        self.roster = get("roster")
        self.dataset = get("dataset")
        self.checkpoint = get("checkpoint")
        opts = get("search.optimizers")
        self.search_optimizers = tuple(o.strip() for o in opts.split(",")) if opts else ("adam",)
        self.criteria = OrganCriteria.from_config(self.raw)
        self.dnn = _section(self.raw, "dnn", MultiviewConfig())
        self.forest = _section(self.raw, "forest", ForestConfig())
        self.gbt = _section(self.raw, "gbt", GbtConfig())
        try:
            self.augment = _section(self.raw, "augment", AugmentConfig())
        except ValueError as exc:
            raise BadConfig(str(exc)) from exc
        known_prefixes = ("priors.", "dnn.", "forest.", "gbt.", "augment.")
        known = {"seed", "budget", "cv.k", "cv.inner_val_fraction", "split.ratios",
                 "ensemble.grid_step", "synth.n", "synth.noise", "out", "roster", "dataset",
                 "checkpoint", "search.optimizers"}
        for key in self.raw:
            if key not in known and not key.startswith(known_prefixes):
                raise BadConfig(f"unknown config key {key!r}")

    def settings(self):
        from .eval import CVSettings

        self.dnn.validate()
        return CVSettings(
            dnn=self.dnn,
            budget=self.budget,
            search_optimizers=self.search_optimizers,
            forest=self.forest,
            gbt=self.gbt,
            augment=self.augment,
            criteria=self.criteria,
            grid_step=self.grid_step,
        )

    def load(self):
        if not self.dataset:
            raise BadConfig("no dataset given (use --dataset or the 'dataset' key)")
        records = load_dataset(self.dataset)
        return records, clean(records, source=self.dataset)


# -- output helpers

class _Staging:
    """Write into a temporary directory and move files into ``out`` only on
    success, so a failed run leaves no partial files behind."""

    def __init__(self, out: Path):
        self.out = out

    def __enter__(self) -> Path:
        self.tmp = Path(tempfile.mkdtemp(prefix=".nanopk-"))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.out.mkdir(parents=True, exist_ok=True)
                for f in sorted(self.tmp.iterdir()):
                    shutil.move(str(f), str(self.out / f.name))
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands

def cmd_ingest(rc: RunConfig) -> dict:
    records, cleaned = rc.load()
    summary = summarize(records, cleaned)
    print(f"{summary['loaded']} loaded, {summary['retained']} retained")
    if summary["retained"] >= 5:
        split = make_holdout_split(summary["retained"], rc.ratios, rc.seed)
        summary["holdout_sizes"] = [len(split.train_idx), len(split.val_idx), len(split.test_idx)]
    if summary["retained"] >= rc.k:
        plan = make_cv_folds(summary["retained"], rc.k, rc.seed)
        summary["fold_sizes"] = [len(f) for f in plan.folds]
    with _Staging(rc.out) as tmp:
        _dump(tmp / "ingest.json", summary)
    return summary


def cmd_features(rc: RunConfig) -> Path:
    _, cleaned = rc.load()
    xt = secondary_matrix(cleaned.records, rc.criteria)
    with _Staging(rc.out) as tmp:
        with (tmp / "secondary_features.csv").open("w") as fh:
            fh.write(",".join(("row",) + SECONDARY_COLUMNS) + "\n")
            for row_id, row in zip(cleaned.row_indices, xt):
                fh.write(",".join([str(row_id)] + [repr(float(v)) for v in row]) + "\n")
    return rc.out / "secondary_features.csv"


def cmd_synth(rc: RunConfig) -> Path:
    from .synth import SynthConfig, generate

    records, _ = generate(SynthConfig(rc.synth_n, rc.synth_noise, rc.seed))
    with _Staging(rc.out) as tmp:
        write_dataset(tmp / "synthetic.csv", records)
    print(f"wrote {len(records)} rows to {rc.out / 'synthetic.csv'}")
    return rc.out / "synthetic.csv"


def cmd_train(rc: RunConfig) -> dict:
    from .artifacts import save_network
    from .eval import NETWORKS, run_holdout

    _, cleaned = rc.load()
    split = make_holdout_split(len(cleaned), rc.ratios, rc.seed)
    res = run_holdout(cleaned, split, rc.roster or "ensemble", rc.settings(), rc.seed,
                      keep_models=True)
    with _Staging(rc.out) as tmp:
        for label, model in res.models.items():
            if label in NETWORKS:
                save_network(tmp / f"{_slug(label)}.npkt", model, res.prep, label)
        trees = {f"{label}:{TARGET_LABELS[o]}": m
                 for label, ms in res.models.items() if label not in NETWORKS
                 for o, m in enumerate(ms)}
        if trees:
            save_trees(tmp / "trees.json", trees)
        _dump(tmp / "holdout_report.json", res.to_dict())
    _print_metrics({"test": res})
    return res.to_dict()


def cmd_cv(rc: RunConfig):
    from .eval import run_cv

    _, cleaned = rc.load()
    plan = make_cv_folds(len(cleaned), rc.k, rc.seed, rc.inner_val_fraction)
    report = run_cv(cleaned, plan, rc.roster or "ensemble", rc.settings(), rc.seed)
    if not report.leakage_ok():
        raise NanopkError("leakage audit failed; see cv_report.json")
    with _Staging(rc.out) as tmp:
        report.write(tmp)
    _print_summary(report)
    return report


def cmd_benchmark(rc: RunConfig) -> dict:
    """5-fold CV and a single hold-out test run over the same roster."""
    from .eval import run_cv, run_holdout

    _, cleaned = rc.load()
    settings = rc.settings()
    roster = rc.roster or "benchmark"
    plan = make_cv_folds(len(cleaned), rc.k, rc.seed, rc.inner_val_fraction)
    report = run_cv(cleaned, plan, roster, settings, rc.seed)
    split = make_holdout_split(len(cleaned), rc.ratios, rc.seed)
    holdout = run_holdout(cleaned, split, roster, settings, rc.seed)
    agg = report.aggregate()
    table = []
    for m in report.roster:
        for o, label in enumerate(TARGET_LABELS):
            table.append([m, label, agg[m][label]["r2"]["mean"], agg[m][label]["r2"]["std"],
                          holdout.metrics[m][o].r2, agg[m][label]["rmse"]["mean"],
                          agg[m][label]["rmse"]["std"], holdout.metrics[m][o].rmse])
    with _Staging(rc.out) as tmp:
        report.write(tmp)
        _dump(tmp / "holdout_report.json", holdout.to_dict())
        with (tmp / "benchmark.csv").open("w") as fh:
            fh.write("model,output,cv_r2_mean,cv_r2_std,test_r2,cv_rmse_mean,cv_rmse_std,test_rmse\n")
            for row in table:
                fh.write(",".join([row[0], row[1]] + [repr(float(v)) for v in row[2:]]) + "\n")
    _print_summary(report)
    return {"cv": report.to_dict(), "holdout": holdout.to_dict()}


def cmd_saliency(rc: RunConfig):
    from .artifacts import load_network
    from .eval import saliency

    if not rc.checkpoint:
        raise BadConfig("saliency needs --checkpoint")
    model, prep, meta = load_network(rc.checkpoint, rc.criteria)
    if prep is None:
        raise DataError("checkpoint carries no preprocessing statistics")
    _, cleaned = rc.load()
    x, xt = prep.inputs(cleaned.records)
    report = saliency(model, x, xt)
    with _Staging(rc.out) as tmp:
        report.write_csv(tmp)
        _dump(tmp / "saliency.json", {**report.to_dict(), "label": meta.get("label"),
                                      "degenerate": report.degenerate})
    if report.degenerate:
        print("warning: all-zero saliency for " +
              ", ".join(f"{o}/{c}" for o, c in report.zero_channels))
    return report


def _slug(label: str) -> str:
    return label.lower().replace("+", "_").replace(" ", "_")


def _print_metrics(results: dict) -> None:
    for scope, res in results.items():
        for m, pairs in res.metrics.items():
            cells = "  ".join(f"{o}: R2={p.r2:.3f} RMSE={p.rmse:.3g}" for o, p in zip(TARGET_LABELS, pairs))
            print(f"[{scope}] {m:<14} {cells}")


def _print_summary(report) -> None:
    agg = report.aggregate()
    for m in report.roster:
        cells = "  ".join(
            f"{o}: R2={agg[m][o]['r2']['mean']:.3f}+-{agg[m][o]['r2']['std']:.3f}" for o in TARGET_LABELS
        )
        print(f"{m:<14} {cells}")
    for o, entry in report.p_values.items():
        if entry.get("p_value") is not None:
            print(f"{o}: p={entry['p_value']:.3g} vs {entry['alternative']}")


HANDLERS = {
    "ingest": cmd_ingest,
    "features": cmd_features,
    "synth": cmd_synth,
    "train": cmd_train,
    "cv": cmd_cv,
    "benchmark": cmd_benchmark,
    "saliency": cmd_saliency,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nanopk", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__doc__ and HANDLERS[name].__doc__.splitlines()[0])
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dataset", help="dataset CSV path")
        p.add_argument("--roster", help="ensemble, benchmark, ablation, full, or model labels")
        p.add_argument("--budget", type=int, help="hyperparameter search trials per fit")
        if name == "saliency":
            p.add_argument("--checkpoint", help="network checkpoint file")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        rc = RunConfig(read_config(args.config), args)
        HANDLERS[args.command](rc)
    except NanopkError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FileNotFoundError) as exc:
        code = ConfigError.exit_code if isinstance(exc, ValueError) else DataError.exit_code
        print(f"error: {exc}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
