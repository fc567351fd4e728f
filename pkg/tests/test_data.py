"""Dataset generators, splits, standardization, CSV round trips."""

import numpy as np
import pytest

from concurve.data import (
    Dataset,
    destandardize,
    gen_kovacs,
    gen_seasonal,
    gen_toy1,
    gen_toy2,
    load_csv,
    standardize,
    write_csv,
)
from concurve.errors import ContractError, DataError, SchemaError


def pearson(a, b):
    return float(np.corrcoef(a, b)[0, 1])


class TestToy1:
    def test_exact_copy_for_rho_one(self):
        ds = gen_toy1(1000, rho=1.0, seed=0)
        assert np.array_equal(ds.features[:, 0], ds.features[:, 1])
        assert pearson(ds.features[:, 0], ds.features[:, 1]) == pytest.approx(1.0)

    def test_target_equals_first_feature(self):
        for rho in (0.0, 0.9, 1.0):
            ds = gen_toy1(500, rho=rho, seed=3)
            assert np.array_equal(ds.target, ds.features[:, 0])

    def test_copula_calibration(self):
        ds = gen_toy1(10000, rho=0.9, seed=7)
        corr = pearson(ds.features[:, 0], ds.features[:, 1])
        assert 0.88 <= corr <= 0.92

    def test_features_are_uniform_range(self):
        ds = gen_toy1(5000, rho=0.9, seed=1)
        assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0

    def test_rho_restricted_unless_freed(self):
        with pytest.raises(ContractError):
            gen_toy1(100, rho=0.5, seed=0)
        ds = gen_toy1(10000, rho=0.5, seed=0, allow_any_rho=True)
        assert pearson(ds.features[:, 0], ds.features[:, 1]) == pytest.approx(0.5, abs=0.03)

    def test_split_proportions(self):
        ds = gen_toy1(10000, rho=0.0, seed=0)
        assert (ds.split == "train").sum() == 7000
        assert (ds.split == "val").sum() == 2000
        assert (ds.split == "test").sum() == 1000

    def test_determinism(self):
        a = gen_toy1(200, rho=0.9, seed=5)
        b = gen_toy1(200, rho=0.9, seed=5)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.split, b.split)


class TestToy2:
    def test_construction(self):
        ds = gen_toy2(1000, seed=2)
        assert np.array_equal(ds.features[:, 1], np.abs(ds.features[:, 0]))
        assert np.array_equal(ds.target, ds.features[:, 1])

    def test_uncorrelated_but_dependent(self):
        ds = gen_toy2(10000, seed=11)
        assert abs(pearson(ds.features[:, 0], ds.features[:, 1])) < 0.05


class TestKovacs:
    def test_noise_free_variant(self):
        ds = gen_kovacs(500, seed=1, sigma1=0.0, sigma2=0.0)
        x3, x5 = ds.features[:, 2], ds.features[:, 4]
        np.testing.assert_allclose(x5, x3 ** 2, atol=1e-12)

    def test_default_concurvity_is_strong(self):
        # analytic corr is 1/sqrt(1 + sigma1^2 / Var(U^2)) ~ 0.986 at sigma1=0.05
        ds = gen_kovacs(10000, seed=4)
        x3, x5 = ds.features[:, 2], ds.features[:, 4]
        assert pearson(x5, x3 ** 2) > 0.98

    def test_seven_three_split_with_test_as_eval(self):
        ds = gen_kovacs(10000, seed=0)
        assert (ds.split == "train").sum() == 7000
        assert (ds.split == "val").sum() == 0
        assert (ds.split == "test").sum() == 3000
        assert ds.eval_split_name() == "test"


class TestSeasonal:
    def test_smooth_weekly_autocorrelation(self):
        ds = gen_seasonal(24 * 7 * 12, seed=3, shape="smooth")
        y = ds.target
        lag = 168
        assert pearson(y[:-lag], y[lag:]) > 0.95

    def test_step_levels_are_exact(self):
        ds = gen_seasonal(24 * 7 * 4, seed=0, shape="step")
        levels = np.unique(ds.target)
        np.testing.assert_array_equal(levels, [-3.0, -1.0, 1.0, 3.0])

    def test_determinism_and_time_column(self):
        a = gen_seasonal(400, seed=9, shape="smooth")
        b = gen_seasonal(400, seed=9, shape="smooth")
        assert np.array_equal(a.target, b.target)
        assert a.feature_names == ["t"]
        np.testing.assert_array_equal(a.features[:, 0], np.arange(400.0))

    def test_bad_shape_rejected(self):
        with pytest.raises(ContractError):
            gen_seasonal(400, seed=0, shape="sawtooth")


class TestSplits:
    def test_disjoint_and_exhaustive(self):
        ds = gen_toy1(997, rho=0.0, seed=13)
        counts = {name: (ds.split == name).sum() for name in ("train", "val", "test")}
        assert sum(counts.values()) == 997


class TestStandardize:
    def test_train_moments(self):
        ds = standardize(gen_kovacs(2000, seed=5))
        train = ds.features[ds.split == "train"]
        assert np.abs(train.mean(axis=0)).max() < 1e-9
        assert np.abs(train.std(axis=0) - 1.0).max() < 1e-6
        t_train = ds.target[ds.split == "train"]
        assert abs(t_train.mean()) < 1e-9

    def test_round_trip(self):
        raw = gen_toy2(500, seed=8)
        back = destandardize(standardize(raw))
        np.testing.assert_allclose(back.features, raw.features, atol=1e-9)
        np.testing.assert_allclose(back.target, raw.target, atol=1e-9)

    def test_skip_features(self):
        raw = gen_seasonal(500, seed=2, shape="smooth")
        ds = standardize(raw, skip_features=("t",))
        np.testing.assert_array_equal(ds.features[:, 0], raw.features[:, 0])
        t_train = ds.target[ds.split == "train"]
        assert abs(t_train.mean()) < 1e-9

    def test_double_standardize_rejected(self):
        ds = standardize(gen_toy2(100, seed=0))
        with pytest.raises(ContractError):
            standardize(ds)

    def test_constant_column_flagged(self):
        features = np.column_stack([np.arange(20.0), np.full(20, 3.0)])
        split = np.array(["train"] * 14 + ["val"] * 4 + ["test"] * 2, dtype=object)
        ds = Dataset(features, np.arange(20.0), ["a", "b"], "regression", split)
        out = standardize(ds)
        assert out.constant_columns == ("b",)
        np.testing.assert_allclose(out.features[:, 1], 0.0)


class TestCsv:
    def test_round_trip_with_split(self, tmp_path):
        ds = gen_toy2(200, seed=1)
        path = tmp_path / "toy2.csv"
        write_csv(ds, path)
        loaded = load_csv(path)
        np.testing.assert_array_equal(loaded.features, ds.features)
        np.testing.assert_array_equal(loaded.target, ds.target)
        assert np.array_equal(loaded.split, ds.split)
        assert loaded.feature_names == ds.feature_names

    def test_one_hot_expansion(self, tmp_path):
        path = tmp_path / "cat.csv"
        path.write_text("color,y\nred,1.0\nblue,2.0\ngreen,3.0\nred,4.0\n")
        ds = load_csv(path)
        assert ds.feature_names == ["color=blue", "color=green", "color=red"]
        np.testing.assert_array_equal(ds.features.sum(axis=1), np.ones(4))
        np.testing.assert_array_equal(ds.features[:, 2], [1.0, 0.0, 0.0, 1.0])

    def test_missing_values_listed(self, tmp_path):
        path = tmp_path / "gaps.csv"
        path.write_text("a,y\n1.0,2.0\n,3.0\n4.0,\n")
        with pytest.raises(DataError, match=r"rows \[3, 4\]"):
            load_csv(path)

    def test_missing_target_column(self, tmp_path):
        path = tmp_path / "no_target.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(path, target_column="y")

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("a,y\n1.0,2.0\n3.0\n")
        with pytest.raises(SchemaError, match="row 3"):
            load_csv(path)

    def test_binary_target_values_enforced(self, tmp_path):
        path = tmp_path / "binary.csv"
        path.write_text("a,y\n1.0,0\n2.0,2\n")
        with pytest.raises(DataError):
            load_csv(path, task="binary")

    def test_split_assigned_when_absent(self, tmp_path):
        path = tmp_path / "nosplit.csv"
        rows = "\n".join(f"{i},{i * 2}" for i in range(100))
        path.write_text("a,y\n" + rows + "\n")
        ds = load_csv(path, split_seed=3)
        assert (ds.split == "train").sum() == 70
        again = load_csv(path, split_seed=3)
        assert np.array_equal(ds.split, again.split)
