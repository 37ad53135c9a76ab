import numpy as np
import pytest

from perfridge.dataset import (
    HOUSING_RECIPE,
    LSAC_RECIPE,
    ShiftPlan,
    inject_shift,
    load_and_preprocess,
    real_rrm_experiment,
    split_folds,
)
from perfridge.errors import (
    InsufficientRows,
    InvalidInput,
    MissingColumn,
    ParseError,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadAndPreprocess:
    def test_population_standardization(self, tmp_path):
        path = write(tmp_path, "toy.csv", "a,t\n1,5\n2,6\n3,7\n")
        ds = load_and_preprocess(path, "custom", target="t")
        assert np.allclose(ds.x[:, 0], [-1.2247448, 0.0, 1.2247448], atol=1e-6)
        assert ds.y.mean() == pytest.approx(0.0, abs=1e-12)

    def test_standardization_idempotent(self, tmp_path):
        path = write(tmp_path, "toy.csv", "a,b,t\n1,4,5\n2,1,6\n3,7,7\n9,2,1\n")
        ds = load_and_preprocess(path, "custom", target="t")
        rescaled = (ds.x - ds.x.mean(axis=0)) / ds.x.std(axis=0)
        assert np.allclose(rescaled, ds.x, atol=1e-12)

    def test_zero_variance_column_logged(self, tmp_path):
        path = write(tmp_path, "toy.csv", "a,const,t\n1,9,5\n2,9,6\n3,9,7\n")
        ds = load_and_preprocess(path, "custom", target="t")
        assert ds.feature_names == ["a"]
        assert any("ZeroVarianceColumn" in line for line in ds.provenance["log"])

    def test_non_numeric_column_dropped(self, tmp_path):
        path = write(tmp_path, "toy.csv", "a,label,t\n1,x,5\n2,y,6\n3,z,7\n")
        ds = load_and_preprocess(path, "custom", target="t")
        assert ds.feature_names == ["a"]
        assert any("NonNumericColumn" in line for line in ds.provenance["log"])

    def test_missing_rows_dropped(self, tmp_path):
        path = write(tmp_path, "toy.csv", "a,t\n1,5\n,6\n3,7\n4,8\n")
        ds = load_and_preprocess(path, "custom", target="t")
        assert ds.n_rows == 3
        assert any("MissingValues" in line for line in ds.provenance["log"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_and_preprocess(tmp_path / "absent.csv", "housing")

    def test_missing_column(self, tmp_path):
        path = write(tmp_path, "toy.csv", "a,t\n1,5\n2,6\n")
        with pytest.raises(MissingColumn):
            load_and_preprocess(path, "custom", target="nope")

    def test_ragged_row(self, tmp_path):
        path = write(tmp_path, "toy.csv", "a,b,t\n1,2,3\n4,5\n")
        with pytest.raises(ParseError):
            load_and_preprocess(path, "custom", target="t")

    def test_housing_recipe_keeps_eight(self, housing_csv):
        ds = load_and_preprocess(housing_csv, "housing")
        assert ds.n_features == 8
        assert abs(ds.x.mean(axis=0)).max() <= 1e-9
        assert abs(ds.x.std(axis=0) - 1).max() <= 1e-9
        assert abs(ds.y.mean()) <= 1e-9

    def test_lsac_recipe_width(self, lsac_csv):
        ds = load_and_preprocess(lsac_csv, "lsac")
        assert ds.n_features == 22
        dropped = " ".join(ds.provenance["log"])
        for name in ("male", "parttime", "decile1", "ugpa", "index6040"):
            assert name in dropped


class TestSplitFolds:
    def test_even_split(self):
        split = split_folds(10, 5, seed=0)
        assert [f.size for f in split.fold_indices] == [2, 2, 2, 2, 2]

    def test_housing_sizes(self):
        split = split_folds(20640, 5, seed=1)
        sizes = [f.size for f in split.fold_indices]
        assert all(abs(s - 4128) <= 1 for s in sizes)
        assert sum(sizes) == 20640

    def test_deterministic(self):
        a = split_folds(1000, 5, seed=42)
        b = split_folds(1000, 5, seed=42)
        for fa, fb in zip(a.fold_indices, b.fold_indices):
            assert np.array_equal(fa, fb)

    def test_disjoint_and_exhaustive(self):
        split = split_folds(103, 5, seed=3)
        allidx = np.concatenate(split.fold_indices)
        assert np.array_equal(np.sort(allidx), np.arange(103))

    def test_per_step_truncation(self):
        split = split_folds(1000, 5, per_step_n=100, seed=0)
        assert [f.size for f in split.train_folds] == [100, 100, 100, 100]
        assert split.test_fold.size == 200

    def test_insufficient_rows(self):
        with pytest.raises(InsufficientRows):
            split_folds(100, 5, per_step_n=30, seed=0)


class TestInjectShift:
    def test_zero_theta(self):
        x = np.arange(12, dtype=float).reshape(4, 3)
        y = np.ones(4)
        plan = ShiftPlan(("a",), 0.1)
        out = inject_shift(x, y, plan, np.zeros(3), ["a", "b", "c"])
        assert np.array_equal(out, y)

    def test_zero_bbar(self):
        x = np.arange(12, dtype=float).reshape(4, 3)
        y = np.ones(4)
        plan = ShiftPlan(("a",), 0.0)
        out = inject_shift(x, y, plan, np.ones(3), ["a", "b", "c"])
        assert np.array_equal(out, y)

    def test_single_feature_value(self):
        x = np.array([[2.0, 7.0]])
        y = np.array([1.0])
        plan = ShiftPlan(("f1",), 0.1)
        out = inject_shift(x, y, plan, np.array([0.5, 3.0]), ["f1", "f2"])
        assert out[0] == pytest.approx(1.1, abs=1e-14)

    def test_linearity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((10, 4))
        y = rng.standard_normal(10)
        theta = rng.standard_normal(4)
        names = ["a", "b", "c", "d"]
        d1 = inject_shift(x, y, ShiftPlan(("a", "c"), 0.1), theta, names) - y
        d2 = inject_shift(x, y, ShiftPlan(("a", "c"), 0.2), theta, names) - y
        assert np.allclose(d2, 2 * d1, atol=1e-14)

    def test_unknown_feature(self):
        plan = ShiftPlan(("ghost",), 0.1)
        with pytest.raises(MissingColumn):
            inject_shift(np.ones((2, 2)), np.ones(2), plan, np.ones(2), ["a", "b"])

    def test_bbar_bound(self):
        with pytest.raises(InvalidInput):
            ShiftPlan(("a",), 1.0)


class TestRealExperiment:
    def test_no_shift_collapses_to_last_fold_fit(self, housing_csv):
        ds = load_and_preprocess(housing_csv, "housing")
        grid = [0.05, 0.2]
        plan = ShiftPlan(HOUSING_RECIPE.performative, 0.0)
        res = real_rrm_experiment(ds, plan, grid, per_step_n=500, seed=5, baseline=0.0)
        split = split_folds(ds.n_rows, 5, per_step_n=500, seed=5)
        last = split.train_folds[-1]
        test = split.test_fold
        xk, yk = ds.x[last], ds.y[last]
        xt, yt = ds.x[test], ds.y[test]
        for lam, got in zip(grid, res.mean_risk):
            theta = np.linalg.solve(xk.T @ xk / last.size + lam * np.eye(ds.n_features), xk.T @ yk / last.size)
            mse = float(np.mean((xt @ theta - yt) ** 2))
            assert got == pytest.approx(mse, rel=1e-10)

    def test_deterministic(self, housing_csv):
        ds = load_and_preprocess(housing_csv, "housing")
        plan = ShiftPlan(HOUSING_RECIPE.performative, 0.1)
        r1 = real_rrm_experiment(ds, plan, [0.1, 0.3], per_step_n=400, seed=9)
        r2 = real_rrm_experiment(ds, plan, [0.1, 0.3], per_step_n=400, seed=9)
        assert r1.mean_risk == r2.mean_risk
        assert r1.meta["baseline"] == r2.meta["baseline"]

    def test_baseline_subtraction(self, housing_csv):
        ds = load_and_preprocess(housing_csv, "housing")
        plan = ShiftPlan(HOUSING_RECIPE.performative, 0.0)
        res = real_rrm_experiment(ds, plan, list(np.linspace(0, 0.4, 12)), per_step_n=800, seed=2)
        # at b = 0 the reported curve is its own baseline: min exactly 0
        assert min(res.mean_risk) == pytest.approx(0.0, abs=1e-15)

    def test_lsac_runs_at_small_n(self, lsac_csv):
        ds = load_and_preprocess(lsac_csv, "lsac")
        plan = ShiftPlan(LSAC_RECIPE.performative, 0.1)
        res = real_rrm_experiment(ds, plan, [1.0, 3.0], per_step_n=100, seed=5)
        assert len(res.mean_risk) == 2
        assert res.meta["fold_sizes"][:4] == [100, 100, 100, 100]
