import json
from dataclasses import replace

import numpy as np
import pytest

from nanopk.artifacts import load_network, save_network
from nanopk.cli import RunConfig, build_parser, main, read_config
from nanopk.dataset import clean, load_dataset, write_dataset
from nanopk.errors import BadConfig
from nanopk.models import MultiviewConfig, build_multiview
from nanopk.pipeline import Preprocessor

FAST_CONFIG = """\
# tiny settings so the whole pipeline runs in seconds
budget = 1
cv.k = 3
dnn.max_epochs = 4
dnn.patience = 2
forest.n_trees = 4
gbt.n_rounds = 10
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "fast.cfg").write_text(FAST_CONFIG + "synth.n = 60\n")
    assert run("synth", "--config", root / "fast.cfg", "--out", root / "data", "--seed", 3) == 0
    return root


@pytest.fixture(scope="module")
def dataset(workspace):
    return workspace / "data" / "synthetic.csv"


@pytest.fixture(scope="module")
def cfg(workspace):
    return workspace / "fast.cfg"


class TestConfig:
    def test_read_config(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("a = 1  # note\n\n# whole line\nb.c=x y\n")
        assert read_config(p) == {"a": "1", "b.c": "x y"}

    def test_flags_win(self, tmp_path):
        args = build_parser().parse_args(["cv", "--seed", "9", "--budget", "2"])
        rc = RunConfig({"seed": "1", "budget": "7", "dnn.hidden_units": "64"}, args)
        assert (rc.seed, rc.budget, rc.dnn.hidden_units) == (9, 2, 64)

    def test_defaults(self):
        rc = RunConfig({}, build_parser().parse_args(["cv"]))
        assert (rc.seed, rc.budget, rc.k, rc.grid_step) == (0, 10, 5, 0.05)
        assert rc.search_optimizers == ("adam",)

    @pytest.mark.parametrize("raw", [{"bogus": "1"}, {"dnn.nope": "1"}, {"budget": "many"},
                                     {"dnn.hidden_units": "x"}])
    def test_bad_keys(self, raw):
        with pytest.raises(BadConfig):
            RunConfig(raw, build_parser().parse_args(["cv"]))

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("no equals sign\n")
        with pytest.raises(BadConfig):
            read_config(p)


class TestExitCodes:
    def test_usage_error(self, capsys):
        assert run("frobnicate") == 1

    def test_missing_config_file(self, tmp_path):
        assert run("ingest", "--config", tmp_path / "none.cfg", "--dataset", "x") == 1

    def test_unknown_roster(self, dataset, cfg, tmp_path):
        assert run("cv", "--config", cfg, "--dataset", dataset, "--roster", "SVM",
                   "--out", tmp_path / "o") == 1

    def test_empty_file(self, tmp_path, capsys):
        (tmp_path / "empty.csv").write_text("")
        assert run("ingest", "--dataset", tmp_path / "empty.csv", "--out", tmp_path / "o") == 2
        assert "EmptyFile" in capsys.readouterr().err

    def test_missing_dataset_leaves_no_files(self, cfg, tmp_path):
        out = tmp_path / "out"
        assert run("cv", "--config", cfg, "--dataset", tmp_path / "missing.csv", "--out", out) == 2
        assert not out.exists()

    def test_numeric_failure(self, dataset, cfg, tmp_path):
        # constant targets leave R2 undefined on every held-out fold
        records = [replace(r, ktres_n=1.0) for r in load_dataset(dataset)]
        write_dataset(tmp_path / "flat.csv", records)
        code = run("cv", "--config", cfg, "--dataset", tmp_path / "flat.csv", "--roster", "RF",
                   "--out", tmp_path / "o")
        assert code == 3
        assert not (tmp_path / "o").exists()


class TestCommands:
    def test_synth_rows(self, dataset):
        assert len(load_dataset(dataset)) == 60

    def test_synth_fixed_seed_identical(self, cfg, tmp_path):
        for name in ("a", "b"):
            assert run("synth", "--config", cfg, "--out", tmp_path / name, "--seed", 3) == 0
        assert (tmp_path / "a/synthetic.csv").read_bytes() == (tmp_path / "b/synthetic.csv").read_bytes()

    def test_ingest_counts(self, dataset, tmp_path, capsys):
        assert run("ingest", "--dataset", dataset, "--out", tmp_path) == 0
        assert "60 loaded, 60 retained" in capsys.readouterr().out
        summary = json.loads((tmp_path / "ingest.json").read_text())
        assert summary["holdout_sizes"] == [36, 12, 12]
        assert summary["fold_sizes"] == [12] * 5

    def test_features(self, dataset, tmp_path):
        assert run("features", "--dataset", dataset, "--out", tmp_path) == 0
        lines = (tmp_path / "secondary_features.csv").read_text().splitlines()
        assert len(lines) == 61 and len(lines[0].split(",")) == 17

    def test_input_untouched(self, dataset, cfg, tmp_path):
        before = dataset.read_bytes()
        assert run("cv", "--config", cfg, "--dataset", dataset, "--roster", "RF",
                   "--out", tmp_path) == 0
        assert dataset.read_bytes() == before

    def test_cv_byte_identical(self, dataset, cfg, tmp_path):
        for name in ("a", "b"):
            assert run("cv", "--config", cfg, "--dataset", dataset, "--seed", 4,
                       "--out", tmp_path / name) == 0
        for f in ("cv_report.json", "cv_folds.csv", "cv_summary.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        report = json.loads((tmp_path / "a/cv_report.json").read_text())
        assert report["leakage_audit_passed"] and report["k"] == 3

    def test_cv_ablation_rows(self, dataset, cfg, tmp_path):
        assert run("cv", "--config", cfg, "--dataset", dataset, "--roster", "ablation",
                   "--out", tmp_path) == 0
        rows = (tmp_path / "cv_summary.csv").read_text().splitlines()[1:]
        models = list(dict.fromkeys(r.split(",")[0] for r in rows))
        assert models == ["DNN Primary", "DNN Secondary", "DNN", "DNN+XGB", "DNN+RF", "DNN+XGB+RF"]

    def test_benchmark(self, dataset, cfg, tmp_path):
        assert run("benchmark", "--config", cfg, "--dataset", dataset, "--roster", "RF,XGB",
                   "--out", tmp_path) == 0
        lines = (tmp_path / "benchmark.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 4

    def test_train_then_saliency(self, dataset, cfg, tmp_path):
        assert run("train", "--config", cfg, "--dataset", dataset, "--roster", "DNN+XGB",
                   "--out", tmp_path) == 0
        assert (tmp_path / "dnn.npkt").exists() and (tmp_path / "trees.json").exists()
        assert run("saliency", "--dataset", dataset, "--checkpoint", tmp_path / "dnn.npkt",
                   "--out", tmp_path / "sal") == 0
        primary = (tmp_path / "sal/saliency_primary.csv").read_text().splitlines()
        secondary = (tmp_path / "sal/saliency_secondary.csv").read_text().splitlines()
        assert len(primary) == len(secondary) == 5
        assert len(primary[0].split(",")) - 1 + len(secondary[0].split(",")) - 1 == 39 + 16

    def test_saliency_zero_init_flagged(self, dataset, tmp_path, capsys):
        records = clean(load_dataset(dataset)).records
        model = build_multiview(MultiviewConfig(hidden_units=8), 39, zero_init=True)
        save_network(tmp_path / "zero.npkt", model, Preprocessor.fit(records))
        assert run("saliency", "--dataset", dataset, "--checkpoint", tmp_path / "zero.npkt",
                   "--out", tmp_path / "sal") == 0
        assert "all-zero saliency" in capsys.readouterr().out
        assert json.loads((tmp_path / "sal/saliency.json").read_text())["degenerate"]

    def test_saliency_corrupt_checkpoint(self, dataset, tmp_path):
        (tmp_path / "bad.npkt").write_bytes(b"NPKTENS1garbage")
        assert run("saliency", "--dataset", dataset, "--checkpoint", tmp_path / "bad.npkt",
                   "--out", tmp_path / "sal") == 2
        assert not (tmp_path / "sal").exists()


class TestArtifacts:
    def test_network_roundtrip(self, tmp_path, rng, small_data):
        model = build_multiview(MultiviewConfig(hidden_units=8, aux_mlp_layers=1), 39)
        prep = Preprocessor.fit(small_data.records)
        save_network(tmp_path / "m.npkt", model, prep, "DNN")
        loaded, prep2, meta = load_network(tmp_path / "m.npkt")
        x, xt = prep.inputs(small_data.records[:10])
        np.testing.assert_array_equal(model.predict(x, xt), loaded.predict(*prep2.inputs(small_data.records[:10])))
        assert meta["label"] == "DNN" and loaded.steps == -1
