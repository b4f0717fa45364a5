import csv
import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanopk.autodiff import ParamStore
from nanopk.dataset import (
    TARGETS,
    clean,
    make_cv_folds,
    make_holdout_split,
    numeric_matrix,
    targets_matrix,
    with_values,
)
from nanopk.errors import (
    AllZeroDifferences,
    BadConfig,
    ShapeMismatch,
    TooFewPairs,
    ZeroVarianceTargets,
)
from nanopk.eval import (
    CVSettings,
    ProvenanceLog,
    input_gradients,
    r2,
    resolve_roster,
    rmse,
    run_cv,
    run_holdout,
    saliency,
    wilcoxon_one_sided,
)
from nanopk.eval.wilcoxon import average_ranks
from nanopk.models import ForestConfig, GbtConfig, MultiviewConfig, build_multiview, build_net
from nanopk.synth import SynthConfig, generate

D = 39


class TestMetrics:
    def test_mean_predictor_scores_zero(self):
        assert r2([1, 2, 3], [2, 2, 2]) == 0.0

    def test_perfect(self):
        assert r2([1, 5, 2], [1, 5, 2]) == 1.0

    def test_hand_value(self):
        # ss_res = 0.25 * 3, ss_tot = 2
        assert r2([1, 2, 3], [1.5, 2.5, 2.5]) == pytest.approx(1 - 0.75 / 2, abs=1e-15)

    def test_worse_than_mean_is_negative(self):
        assert r2([1, 2, 3], [3, 2, 1]) == pytest.approx(-3.0)

    @given(st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance(self, a, b):
        y = np.array([0.3, 1.7, -2.0, 4.1, 0.0])
        y_hat = np.array([0.5, 1.2, -1.0, 3.0, 0.4])
        assert r2(a * y + b, a * y_hat + b) == pytest.approx(r2(y, y_hat), rel=1e-9, abs=1e-12)

    def test_constant_targets(self):
        with pytest.raises(ZeroVarianceTargets):
            r2([2, 2, 2], [1, 2, 3])

    def test_rmse_hand_value(self):
        assert rmse([0, 0], [3, 4]) == math.sqrt(12.5)

    def test_rmse_zero_iff_equal(self, rng):
        y = rng.normal(size=7)
        assert rmse(y, y) == 0.0
        assert rmse(y, y + 1e-9) > 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            rmse([1, 2], [1, 2, 3])


def brute_wilcoxon(d):
    """P(W+ <= observed) by enumerating every sign pattern."""
    d = np.asarray([v for v in d if v != 0], dtype=float)
    mags = np.abs(d)
    ranks = np.array([1 + np.sum(mags < m) + 0.5 * (np.sum(mags == m) - 1) for m in mags])
    observed = ranks[d > 0].sum()
    hits = sum(1 for signs in itertools.product((0, 1), repeat=len(d))
               if ranks[np.array(signs, dtype=bool)].sum() <= observed + 1e-9)
    return hits / 2 ** len(d)


class TestWilcoxon:
    def test_all_negative_five(self):
        res = wilcoxon_one_sided(np.zeros(5), np.arange(1, 6))
        assert res.p_value == 0.03125
        assert res.w_plus == 0.0 and res.method == "exact"

    def test_all_positive_is_one(self):
        assert wilcoxon_one_sided(np.arange(1, 7), np.zeros(6)).p_value == 1.0

    def test_counts_over_powers_of_two(self):
        res = wilcoxon_one_sided([-1, -2, 3, -4, -5, -6], np.zeros(6))
        # W+ = 3: {}, {1}, {2}, {3}, {1,2} => 5 of 64
        assert res.p_value == 5 / 64

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(-6, 6), min_size=5, max_size=12))
    def test_matches_enumeration(self, d):
        if sum(1 for v in d if v != 0) < 5:
            return
        res = wilcoxon_one_sided(np.asarray(d, dtype=float), np.zeros(len(d)))
        assert res.p_value == pytest.approx(brute_wilcoxon(d), abs=1e-12)
        assert res.n == sum(1 for v in d if v != 0)

    def test_zero_differences_dropped(self):
        a = wilcoxon_one_sided([0, -1, -2, -3, -4, -5], np.zeros(6))
        b = wilcoxon_one_sided([-1, -2, -3, -4, -5], np.zeros(5))
        assert a == b

    def test_average_ranks(self):
        np.testing.assert_array_equal(average_ranks([3, 1, 3, 2]), [3.5, 1, 3.5, 2])

    def test_errors(self):
        with pytest.raises(AllZeroDifferences):
            wilcoxon_one_sided(np.ones(8), np.ones(8))
        with pytest.raises(TooFewPairs):
            wilcoxon_one_sided([1, 2, 3, 4], [0, 0, 0, 0])
        with pytest.raises(ShapeMismatch):
            wilcoxon_one_sided([1, 2], [1])

    def test_normal_approximation_hand_value(self):
        d = -np.arange(1, 31, dtype=float)
        d[[0, 3, 7]] *= -1  # ranks 1, 4, 8 positive
        res = wilcoxon_one_sided(d, np.zeros(30))
        assert res.method == "normal" and res.w_plus == 13.0
        z = (13 - 30 * 31 / 4) / math.sqrt(30 * 31 * 61 / 24)
        assert res.p_value == pytest.approx(0.5 * math.erfc(-z / math.sqrt(2)), rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=25, max_size=60))
    def test_normal_matches_scipy(self, d):
        stats = pytest.importorskip("scipy.stats")
        d = np.asarray(d, dtype=float)
        if np.count_nonzero(d) <= 20:
            return
        ours = wilcoxon_one_sided(d, np.zeros(len(d)))
        ref = stats.wilcoxon(d, alternative="less", method="approx", correction=False,
                             zero_method="wilcox")
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)

    def test_exact_threshold_switch(self):
        d = -np.arange(1, 22, dtype=float)
        assert wilcoxon_one_sided(d, np.zeros(21), exact_max_n=21).method == "exact"
        assert wilcoxon_one_sided(d, np.zeros(21)).method == "normal"


class LinearModel:
    """y = x w + xt v, duck-typed to the network interface."""

    def __init__(self, w, v):
        self.store = ParamStore()
        self.w = self.store.add("w", w, "linear")
        self.v = self.store.add("v", v, "linear")

    def forward(self, x, xt, training=False):
        return x @ self.w + xt @ self.v


SAL_CFG = MultiviewConfig(hidden_units=12, aux_mlp_layers=1, head_layers=(1, 1, 1, 1))


def sal_inputs(rng, n=5):
    return rng.normal(size=(n, D)), rng.normal(size=(n, 16))


class TestSaliency:
    def test_gradients_match_finite_differences(self, rng):
        model = build_multiview(SAL_CFG, D)
        x, xt = sal_inputs(rng)
        gx, gxt = input_gradients(model, x, xt)
        eps = 1e-6
        for row, j in ((0, 3), (2, 30), (4, 0)):
            xp, xm = x.copy(), x.copy()
            xp[row, j] += eps
            xm[row, j] -= eps
            fd = (model.predict(xp, xt)[row] - model.predict(xm, xt)[row]) / (2 * eps)
            np.testing.assert_allclose(gx[:, row, j], fd, atol=1e-4)
        for row, j in ((1, 0), (3, 15)):
            tp, tm = xt.copy(), xt.copy()
            tp[row, j] += eps
            tm[row, j] -= eps
            fd = (model.predict(x, tp)[row] - model.predict(x, tm)[row]) / (2 * eps)
            np.testing.assert_allclose(gxt[:, row, j], fd, atol=1e-4)

    def test_normalised_per_channel(self, rng):
        report = saliency(build_multiview(SAL_CFG, D), *sal_inputs(rng))
        np.testing.assert_allclose(report.primary.max(axis=1), 1.0)
        np.testing.assert_allclose(report.secondary.max(axis=1), 1.0)
        assert (report.primary >= 0).all() and not report.degenerate

    def test_ignored_view_is_zero_channel(self, rng):
        model = build_multiview(SAL_CFG.with_(view="primary"), D)
        report = saliency(model, *sal_inputs(rng))
        np.testing.assert_array_equal(report.secondary, 0.0)
        assert [c for _, c in report.zero_channels] == ["secondary"] * 4
        assert report.degenerate

    def test_zeroed_secondary_projections(self, rng):
        model = build_multiview(SAL_CFG, D)
        for name in ("proj_q.weight", "proj_v.weight"):
            model.store[name].data[:] = 0.0
        model.store["aux.0.weight"].data[D:] = 0.0
        report = saliency(model, *sal_inputs(rng))
        np.testing.assert_array_equal(report.secondary, 0.0)
        assert report.primary.max() == 1.0

    def test_linear_model_proportional_to_weights(self, rng):
        w = rng.normal(size=(D, 4))
        v = rng.normal(size=(16, 4))
        report = saliency(LinearModel(w, v), *sal_inputs(rng, 7))
        np.testing.assert_allclose(report.primary, np.abs(w.T) / np.abs(w).max(axis=0)[:, None],
                                   rtol=1e-12)
        np.testing.assert_allclose(report.raw_secondary, np.abs(v.T), rtol=1e-12)

    def test_zero_init_is_degenerate(self, rng):
        report = saliency(build_multiview(SAL_CFG, D, zero_init=True), *sal_inputs(rng))
        assert len(report.zero_channels) == 8
        assert not np.isnan(report.primary).any()

    def test_mlp_linear_regime(self, rng):
        model = build_net("mlp", SAL_CFG.with_(aux_mlp_layers=1), D)
        x, xt = sal_inputs(rng, 1)
        gx, _ = input_gradients(model, x, xt)
        # gradient of a ReLU net is piecewise constant: a small step keeps it
        gx2, _ = input_gradients(model, x + 1e-9, xt)
        np.testing.assert_allclose(gx, gx2, atol=1e-12)

    def test_csv_shape(self, rng, tmp_path):
        report = saliency(build_multiview(SAL_CFG, D), *sal_inputs(rng))
        p, s = report.write_csv(tmp_path)
        rows_p = list(csv.reader(p.open()))
        rows_s = list(csv.reader(s.open()))
        assert len(rows_p) == 5 and all(len(r) == 40 for r in rows_p)
        assert len(rows_s) == 5 and all(len(r) == 17 for r in rows_s)

    def test_mismatched_rows(self, rng):
        with pytest.raises(ShapeMismatch):
            input_gradients(build_multiview(SAL_CFG, D), np.zeros((3, D)), np.zeros((2, 16)))


FAST = CVSettings(
    dnn=MultiviewConfig(max_epochs=8, patience=3, batch_size=32),
    budget=1,
    forest=ForestConfig(n_trees=8),
    gbt=GbtConfig(n_rounds=20),
)


@pytest.fixture(scope="module")
def cv_data():
    records, _ = generate(SynthConfig(n=100, noise=0.1, seed=3))
    return clean(records)


@pytest.fixture(scope="module")
def cv_run(cv_data):
    log = ProvenanceLog()
    plan = make_cv_folds(len(cv_data), 3, seed=1)
    return run_cv(cv_data, plan, "ensemble", FAST, seed=5, provenance=log), plan, log


class TestRoster:
    def test_names(self):
        assert resolve_roster("ablation")[:2] == ("DNN Primary", "DNN Secondary")
        assert resolve_roster("RF, XGB") == ("RF", "XGB")

    def test_unknown(self):
        with pytest.raises(BadConfig):
            resolve_roster("SVM")


class TestCrossValidation:
    def test_fold_structure(self, cv_run):
        report, plan, _ = cv_run
        assert report.k == 3 and len(report.folds) == 3
        for f, test in zip(report.folds, plan.folds):
            assert f.test_idx == test
            assert not set(f.train_idx) & set(f.test_idx)
            assert not set(f.val_idx) & set(f.test_idx)
            assert set(f.metrics) == set(report.roster)

    def test_leakage_audit(self, cv_run):
        report, plan, log = cv_run
        assert report.leakage_ok()
        for i, test in enumerate(plan.folds):
            purposes = {p for s, p, ids in log.events if s == f"fold{i}" and ids & set(test)}
            assert purposes == {"test_eval"}

    def test_ensemble_dominates_on_inner_val(self, cv_run):
        report, _, _ = cv_run
        for f in report.folds:
            for o in range(4):
                best = min(f.val_rmse[m][o] for m in ("DNN", "XGB", "RF"))
                assert f.val_rmse["DNN+XGB+RF"][o] <= best + 1e-12

    def test_aggregates_recomputable(self, cv_run):
        report, _, _ = cv_run
        agg = report.aggregate()
        vals = [f.metrics["RF"][2].r2 for f in report.folds]
        assert agg["RF"]["KTRES50"]["r2"]["mean"] == pytest.approx(np.mean(vals), abs=1e-15)
        assert agg["RF"]["KTRES50"]["r2"]["std"] == pytest.approx(np.std(vals, ddof=1), abs=1e-15)

    def test_metrics_recomputable_from_predictions(self, cv_run):
        report, _, _ = cv_run
        f = report.folds[0]
        assert f.metrics["XGB"][1].rmse == rmse(f.y_test[:, 1], f.test_pred["XGB"][:, 1])

    def test_p_values_present(self, cv_run):
        report, _, _ = cv_run
        for entry in report.p_values.values():
            assert entry["proposed"] == "DNN+XGB+RF"
            assert 0.0 <= entry["p_value"] <= 1.0

    def test_deterministic(self, cv_data, cv_run):
        report, plan, _ = cv_run
        again = run_cv(cv_data, plan, "ensemble", FAST, seed=5)
        for a, b in zip(report.folds, again.folds):
            for m in report.roster:
                np.testing.assert_array_equal(a.test_pred[m], b.test_pred[m])

    def test_held_out_perturbation_does_not_change_fitting(self, cv_data):
        plan = make_cv_folds(len(cv_data), 3, seed=1)
        roster = ("XGB", "RF")
        base = run_cv(cv_data, plan, roster, FAST, seed=2)
        test = set(plan.folds[0])
        records = tuple(r if i not in test else with_values(r, ktres_50=r.ktres_50 * 3 + 7, hd=r.hd * 2)
                        for i, r in enumerate(cv_data.records))
        changed = replace(cv_data, records=records)
        other = run_cv(changed, plan, roster, FAST, seed=2)
        # everything fitted without the held-out rows is unchanged
        assert base.folds[0].val_rmse == other.folds[0].val_rmse
        for m in roster:
            assert base.folds[0].metrics[m] != other.folds[0].metrics[m]

    def test_trees_fit_linear_signal(self, cv_data):
        plan = make_cv_folds(len(cv_data), 3, seed=1)
        report = run_cv(cv_data, plan, ("XGB",), CVSettings(gbt=GbtConfig(n_rounds=150)), seed=0)
        assert report.mean_r2("XGB").mean() > 0.6

    def test_bad_plan(self, cv_data):
        plan = make_cv_folds(len(cv_data) - 1, 3, seed=1)
        with pytest.raises(BadConfig):
            run_cv(cv_data, plan, "RF", FAST)


@pytest.mark.slow
class TestNetworkSignal:
    def test_dnn_fits_data_linear_in_its_inputs(self):
        records, _ = generate(SynthConfig(n=280, seed=11))
        rng = np.random.default_rng(0)
        num = numeric_matrix(records)
        z = (num - num.mean(axis=0)) / num.std(axis=0)
        signal = z @ rng.normal(size=(z.shape[1], 4))
        y = signal + 0.1 * signal.std(axis=0) * rng.standard_normal(signal.shape) + 10
        data = clean([replace(r, **dict(zip(TARGETS, map(float, row)))) for r, row in zip(records, y)])
        report = run_cv(data, make_cv_folds(len(data), 5, seed=0), ("DNN",), CVSettings(budget=1))
        for f in report.folds:
            assert min(p.r2 for p in f.metrics["DNN"]) > 0.8

    def test_ablation_labels(self, cv_data):
        split = make_holdout_split(len(cv_data), seed=0)
        res = run_holdout(cv_data, split, "ablation", FAST, seed=0)
        assert set(res.metrics) == {"DNN Primary", "DNN Secondary", "DNN", "DNN+XGB", "DNN+RF",
                                    "DNN+XGB+RF"}
        assert set(res.search) == {"DNN Primary", "DNN Secondary", "DNN"}


def test_targets_matrix_columns(cv_data):
    y = targets_matrix(cv_data.records)
    assert y.shape == (len(cv_data), 4)
