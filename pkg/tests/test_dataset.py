import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanopk.dataset import (
    FIELD_NAMES,
    PRIMARY_COLUMNS,
    SYMBOLS,
    VOCAB,
    CleanDataset,
    PrimaryEncoder,
    clean,
    encode,
    inner_split,
    load_dataset,
    make_cv_folds,
    make_holdout_split,
    summarize,
    write_dataset,
)
from nanopk.errors import (
    AllRowsDropped,
    BadRatios,
    EmptyFile,
    MissingColumn,
    TooFewSamples,
    UnknownCategory,
)

from conftest import make_record

# one-hot block widths counted from the vocabulary table, plus six numerics
EXPECTED_WIDTH = 3 + 7 + 4 + 3 + 2 + 4 + 10 + 6


def _header():
    return ",".join(SYMBOLS[n] for n in FIELD_NAMES)


class TestLoad:
    def test_roundtrip(self, tmp_path, synth_records):
        records = synth_records[0][:10]
        path = tmp_path / "d.csv"
        write_dataset(path, records)
        assert load_dataset(path) == records

    def test_header_only_gives_no_records(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text(_header() + "\n")
        assert load_dataset(path) == []

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("")
        with pytest.raises(EmptyFile):
            load_dataset(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(_header().replace(",HD", "") + "\n")
        with pytest.raises(MissingColumn, match="HD"):
            load_dataset(path)

    def test_blank_and_garbage_cells_are_missing(self, tmp_path, record):
        path = tmp_path / "b.csv"
        write_dataset(path, [record])
        header, row = path.read_text().splitlines()
        cells = row.split(",")
        cells[FIELD_NAMES.index("hd")] = ""
        cells[FIELD_NAMES.index("zp")] = "n/a"
        cells[FIELD_NAMES.index("dose")] = "inf"
        path.write_text(header + "\n" + ",".join(cells) + "\n")
        (rec,) = load_dataset(path)
        assert rec.hd is None and rec.zp is None and rec.dose is None
        assert rec.bw == record.bw

    def test_header_case_and_category_spacing(self, tmp_path, record):
        path = tmp_path / "c.csv"
        write_dataset(path, [record])
        header, row = path.read_text().splitlines()
        row = row.replace("Xenograft Heterotopic", "xenograft   heterotopic")
        path.write_text(header.lower() + "\n" + row + "\n")
        (rec,) = load_dataset(path)
        assert rec == record


class TestClean:
    def test_complete_records_kept(self, record):
        data = clean([record] * 3)
        assert len(data) == 3
        assert data.row_indices == (0, 1, 2)

    def test_drops_missing(self, record):
        data = clean([record, make_record(zp=None)])
        assert len(data) == 1

    @pytest.mark.parametrize(
        "change",
        [
            {"hd": None},
            {"hd": 0.0},
            {"tsiz": -1.0},
            {"dose": math.nan},
            {"mat": "Unobtainium"},
            {"ar": "Oral"},
            {"ktres_50": None},
        ],
    )
    def test_each_defect_drops_the_row(self, record, change):
        data = clean([record, make_record(**change)])
        assert data.row_indices == (0,)

    def test_negative_zeta_potential_is_kept(self):
        assert len(clean([make_record(zp=-30.0)])) == 1

    def test_all_dropped(self):
        with pytest.raises(AllRowsDropped):
            clean([make_record(hd=None)])

    def test_empty_input(self):
        assert len(clean([])) == 0

    def test_order_and_provenance(self, record):
        recs = [make_record(hd=None), make_record(hd=5.0), make_record(dose=None), make_record(hd=7.0)]
        data = clean(recs, source="x.csv")
        assert [r.hd for r in data.records] == [5.0, 7.0]
        assert data.row_indices == (1, 3)
        assert data.source == "x.csv"

    def test_idempotent_keeps_original_rows(self, record):
        recs = [make_record(hd=None), record, make_record(zp=None), record]
        once = clean(recs)
        assert clean(once) == once


class TestEncode:
    def test_width(self):
        assert len(PRIMARY_COLUMNS) == EXPECTED_WIDTH == 39

    def test_charge_one_hot(self):
        data = clean([make_record(charge="Positive"), make_record(charge="Neutral")])
        x = encode(data, [0, 1]).x
        start = PRIMARY_COLUMNS.index("Charge=Positive")
        np.testing.assert_array_equal(x[0, start : start + 3], [1, 0, 0])
        np.testing.assert_array_equal(x[1, start : start + 3], [0, 0, 1])

    def test_one_hot_groups_sum_to_one(self, small_data):
        x = encode(small_data, range(len(small_data))).x
        offset = 0
        for cat in ("type_np", "mat", "shape", "charge", "ts", "tm", "ct"):
            width = len(VOCAB[cat])
            np.testing.assert_array_equal(x[:, offset : offset + width].sum(axis=1), 1.0)
            offset += width
        assert offset == 33

    def test_mean_maps_to_zero(self):
        data = clean([make_record(hd=10.0), make_record(hd=30.0), make_record(hd=20.0)])
        x = encode(data, [0, 1]).x
        assert x[2, PRIMARY_COLUMNS.index("HD")] == 0.0
        assert x[0, PRIMARY_COLUMNS.index("HD")] == -1.0

    def test_zero_variance_column_is_zero(self, record):
        data = clean([record, make_record(hd=99.0)])
        x = encode(data, [0]).x
        np.testing.assert_array_equal(x[:, PRIMARY_COLUMNS.index("HD")], 0.0)

    def test_statistics_come_only_from_stats_rows(self, small_data):
        train = list(range(60))
        enc = encode(small_data, train)
        again = PrimaryEncoder.fit(small_data.records[:60])
        np.testing.assert_array_equal(enc.encoder.mean, again.mean)
        # perturbing a held-out row leaves the encoding of every other row unchanged
        recs = list(small_data.records)
        recs[100] = make_record(hd=1e6)
        moved = encode(CleanDataset(tuple(recs)), train).x
        np.testing.assert_array_equal(np.delete(moved, 100, 0), np.delete(enc.x, 100, 0))

    def test_pure(self, small_data):
        a = encode(small_data, range(50)).x
        b = encode(small_data, range(50)).x
        assert a.tobytes() == b.tobytes()

    def test_unknown_category(self, record):
        bad = CleanDataset((record, make_record(ct="Heart")))
        with pytest.raises(UnknownCategory):
            encode(bad, [0])

    def test_empty_stats_source(self, small_data):
        with pytest.raises(TooFewSamples):
            encode(small_data, [])


class TestSplits:
    def test_holdout_sizes(self):
        plan = make_holdout_split(280, seed=3)
        assert (len(plan.train_idx), len(plan.val_idx), len(plan.test_idx)) == (168, 56, 56)
        plan = make_holdout_split(10)
        assert (len(plan.train_idx), len(plan.val_idx), len(plan.test_idx)) == (6, 2, 2)

    def test_holdout_deterministic(self):
        assert make_holdout_split(50, seed=9) == make_holdout_split(50, seed=9)
        assert make_holdout_split(50, seed=9) != make_holdout_split(50, seed=10)

    @pytest.mark.parametrize("ratios", [(0.5, 0.2, 0.2), (0.6, 0.6, -0.2), (1.0, 0.0)])
    def test_bad_ratios(self, ratios):
        with pytest.raises(BadRatios):
            make_holdout_split(20, ratios)

    def test_holdout_too_small(self):
        with pytest.raises(TooFewSamples):
            make_holdout_split(4)

    def test_fold_sizes(self):
        assert [len(f) for f in make_cv_folds(280, 5).folds] == [56] * 5
        assert sorted(len(f) for f in make_cv_folds(7, 5).folds) == [1, 1, 1, 2, 2]

    def test_folds_deterministic(self):
        assert make_cv_folds(40, 5, seed=2) == make_cv_folds(40, 5, seed=2)

    def test_too_few_for_folds(self):
        with pytest.raises(TooFewSamples):
            make_cv_folds(4, 5)

    def test_train_portion_excludes_fold(self):
        plan = make_cv_folds(30, 5, seed=1)
        portion = set(plan.train_portion(2))
        assert portion.isdisjoint(plan.folds[2])
        assert len(portion) == 24

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(5, 400), seed=st.integers(0, 2**31 - 1))
    def test_holdout_partition(self, n, seed):
        plan = make_holdout_split(n, seed=seed)
        union = sorted(plan.train_idx + plan.val_idx + plan.test_idx)
        assert union == list(range(n))
        assert abs(len(plan.train_idx) - 0.6 * n) <= 1
        assert abs(len(plan.val_idx) - 0.2 * n) <= 1

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 300), k=st.integers(2, 10), seed=st.integers(0, 10_000))
    def test_fold_partition(self, n, k, seed):
        if n < k:
            return
        plan = make_cv_folds(n, k, seed)
        assert sorted(i for f in plan.folds for i in f) == list(range(n))
        sizes = [len(f) for f in plan.folds]
        assert max(sizes) - min(sizes) <= 1

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(2, 200), frac=st.floats(0.05, 0.5), seed=st.integers(0, 1000))
    def test_inner_split_partition(self, n, frac, seed):
        idx = list(range(100, 100 + n))
        train, val = inner_split(idx, frac, seed)
        assert sorted(train + val) == idx
        assert train and val


def test_summarize_counts(record):
    recs = [record, make_record(hd=None), make_record(hd=1000.0)]
    summary = summarize(recs, clean(recs))
    assert (summary["loaded"], summary["retained"], summary["dropped"]) == (3, 2, 1)
    assert summary["columns"]["HD"]["outside_documented"] == 1
