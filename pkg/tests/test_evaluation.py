import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tcm.errors import DegenerateRanks, MissingPrediction
from tcm.evaluation import (
    DivergenceCache,
    repeated_splits,
    score,
    spearman,
)
from tcm.synthgen import SynthConfig, generate


class TestScore:
    def test_perfect_predictions(self):
        res = score({"a": 2011, "b": 2013}, {"a": 2011, "b": 2013})
        assert res.accuracy == 1.0 and res.mae == 0.0 and res.n == 2

    def test_half_right(self):
        res = score({"a": 2011, "b": 2013}, {"a": 2011, "b": 2011})
        assert res.accuracy == 0.5
        assert res.mae == 1.0
        assert res.residuals == {"a": 0, "b": 2}

    def test_mae_index_uses_year_axis(self):
        res = score({"a": 2018}, {"a": 2011}, years=(2011, 2013, 2015, 2017, 2018))
        assert res.mae == 7.0
        assert res.mae_index == 4.0

    def test_missing_prediction(self):
        with pytest.raises(MissingPrediction):
            score({"a": 2011}, {"a": 2011, "b": 2013})

    def test_extra_predictions_ignored(self):
        res = score({"a": 2011, "zz": 1999}, {"a": 2011})
        assert res.n == 1 and res.accuracy == 1.0

    @settings(max_examples=80, deadline=None)
    @given(seed=st.integers(0, 10**9), n=st.integers(1, 40))
    def test_mae_zero_iff_acc_one(self, seed, n):
        rng = np.random.default_rng(seed)
        labels = {f"f{i}": int(rng.integers(2010, 2016)) for i in range(n)}
        preds = {f"f{i}": int(rng.integers(2010, 2016)) for i in range(n)}
        res = score(preds, labels)
        assert (res.mae == 0.0) == (res.accuracy == 1.0)

    def test_permutation_invariant(self):
        labels = {f"f{i}": 2011 + (i % 3) for i in range(9)}
        preds = {f"f{i}": 2011 + ((i + 1) % 3) for i in range(9)}
        shuffled_preds = dict(reversed(list(preds.items())))
        a = score(preds, labels)
        b = score(shuffled_preds, labels)
        assert a.accuracy == b.accuracy and a.mae == b.mae


class TestSpearman:
    def test_increasing_is_one(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)

    def test_decreasing_is_minus_one(self):
        assert spearman([1, 2, 3, 4], [5, 4, 3, 1]) == pytest.approx(-1.0)

    def test_hand_ranked_example(self):
        assert spearman([1, 2, 3], [2, 1, 3]) == pytest.approx(0.5)

    def test_tie_handling_average_ranks(self):
        # x ranks: (1.5, 1.5, 3); monotone y keeps correlation high but < 1.
        rho = spearman([5, 5, 9], [1, 2, 3])
        assert 0.0 < rho < 1.0
        assert rho == pytest.approx(0.866025403784, abs=1e-9)

    def test_degenerate_ranks(self):
        with pytest.raises(DegenerateRanks):
            spearman([1.0, 1.0, 1.0], [1, 2, 3])

    def test_scale_invariance(self):
        a = spearman([1, 5, 2, 8], [3.0, 1.0, 9.0, 4.0])
        b = spearman([10, 50, 20, 80], [0.3, 0.1, 0.9, 0.4])
        assert a == pytest.approx(b)


def small_dataset(seed=0, footprints=12, weights=(0.5, 0.3, 0.2)):
    return generate(SynthConfig(
        height=96, width=96, layers=3, footprints=footprints,
        size_range=(5.0, 8.0), margin=8.0,
        year_weights=weights, seed=seed,
    ))


class TestRepeatedSplits:
    def test_mode_on_constant_labels_is_perfect(self):
        ds = small_dataset(weights=(1.0, 0.0, 0.0))
        summary = repeated_splits(ds, "mode", n_repeats=10, seed=0,
                                  k_grid=(2,), r_grid=(3.0,))
        assert summary.acc_mean == 1.0
        assert summary.acc_std == 0.0
        assert summary.mae_mean == 0.0

    def test_record_count(self):
        ds = small_dataset()
        summary = repeated_splits(ds, "mode", n_repeats=50, seed=0,
                                  k_grid=(2,), r_grid=(3.0,))
        assert len(summary.records) == 50
        assert {r.repeat for r in summary.records} == set(range(50))

    def test_reproducible_given_seed(self):
        ds = small_dataset()
        a = repeated_splits(ds, "mode", n_repeats=8, seed=5, k_grid=(2,), r_grid=(3.0,))
        b = repeated_splits(ds, "mode", n_repeats=8, seed=5, k_grid=(2,), r_grid=(3.0,))
        assert [r.accuracy for r in a.records] == [r.accuracy for r in b.records]

    def test_mode_accuracy_tracks_modal_frequency(self):
        ds = generate(SynthConfig(
            height=144, width=144, layers=3, footprints=40,
            size_range=(5.0, 8.0), margin=8.0,
            year_weights=(0.7, 0.2, 0.1), seed=0,
        ))
        summary = repeated_splits(ds, "mode", n_repeats=40, seed=1,
                                  k_grid=(2,), r_grid=(3.0,))
        freq = np.mean([ds.labels[i][0] == 1 for i in ds.labeled_ids()])
        assert summary.acc_mean == pytest.approx(freq, abs=0.12)

    def test_supervised_tcm_on_small_synthetic(self):
        ds = small_dataset(footprints=16)
        cache = DivergenceCache(ds, seed=0)
        summary = repeated_splits(ds, "tcm_supervised", n_repeats=6, seed=0,
                                  k_grid=(4,), r_grid=(4.0,), cache=cache)
        assert summary.acc_mean > 0.8

    def test_rejects_semi_method(self):
        ds = small_dataset()
        with pytest.raises(ValueError):
            repeated_splits(ds, "tcm_semi", n_repeats=2, seed=0,
                            k_grid=(2,), r_grid=(3.0,))

    def test_needs_enough_labels(self):
        ds = small_dataset(footprints=3)
        with pytest.raises(ValueError):
            repeated_splits(ds, "mode", n_repeats=2, seed=0, k_grid=(2,), r_grid=(3.0,))


class TestPredictionRange:
    def test_all_methods_stay_within_time_axis(self):
        ds = small_dataset(footprints=14, seed=2)
        cache = DivergenceCache(ds, seed=0)
        from tcm.evaluation import _predict_split

        ids = ds.labeled_ids()
        labels_idx = {i: ds.labels[i][0] for i in ids}
        train, test = ids[:10], ids[10:]
        for method in ("tcm_supervised", "tcm_lr", "avgcolor_threshold",
                       "avgcolor_lr", "color_over_time", "mode"):
            preds, _ = _predict_split(method, cache, labels_idx, train, test,
                                      (2, 4), (3.0,), split_seed=1)
            assert set(preds) == set(test)
            assert all(1 <= p <= ds.n_layers for p in preds.values()), method


class TestDivergenceCache:
    def test_series_cached_and_stable(self):
        ds = small_dataset(footprints=8)
        cache = DivergenceCache(ds, seed=0)
        first = cache.series(3, 4.0)
        again = cache.series(3, 4.0)
        assert first is again
        fresh = DivergenceCache(ds, seed=0).series(3, 4.0)
        for fid in first:
            assert np.array_equal(first[fid], fresh[fid])

    def test_workers_do_not_change_series(self):
        ds = small_dataset(footprints=8)
        s1 = DivergenceCache(ds, seed=0, workers=1).series(3, 4.0)
        s4 = DivergenceCache(ds, seed=0, workers=4).series(3, 4.0)
        for fid in s1:
            assert np.array_equal(s1[fid], s4[fid])
