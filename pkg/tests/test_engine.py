import numpy as np
import pytest

from catebench import dgp
from catebench.engine import (
    CateModel,
    check_leakage,
    fit_combined,
    fit_crossfit,
    fit_estimator,
    fit_single,
    iter_audits,
    predict,
)
from catebench.errors import DegenerateFoldError
from catebench.metalearners import NuisancePredictions, pseudo_DR
from catebench.splitter import STRATEGIES, FoldPlan, make_folds, rotations


class _Const:
    def __init__(self, value):
        self.value = value

    def predict(self, x):
        return np.full(x.shape[0], float(self.value))


def _const_model(value):
    return CateModel(variant="single", predictor=_Const(value))


def _toy_data(seed=0, n=160, p=10):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    d = (rng.random(n) < 0.5).astype(float)
    tau = x[:, 0]
    y = tau * d + x[:, 1] + 0.3 * rng.standard_normal(n)
    return x, d, y, tau


def _oracle_factory(t_of, g_of, e_const=0.5):
    def factory(x_sub):
        g = np.atleast_1d(g_of(x_sub))
        t = np.atleast_1d(t_of(x_sub))
        return NuisancePredictions(
            mu0=g, mu1=g + t, mu=g + e_const * t,
            e=np.full(x_sub.shape[0], e_const),
        )

    return factory


class TestPredictComposition:
    def test_crossfit_mean(self):
        model = CateModel(variant="crossfit_mean",
                          children=[_const_model(1.0), _const_model(3.0)])
        assert np.all(predict(model, np.zeros((4, 2))) == 2.0)

    def test_crossfit_equals_column_mean(self):
        children = [_const_model(v) for v in (0.0, 1.0, 5.0)]
        model = CateModel(variant="crossfit_mean", children=children)
        x = np.zeros((6, 2))
        member_matrix = np.stack([predict(c, x) for c in children])
        assert np.array_equal(predict(model, x), member_matrix.mean(axis=0))

    def test_median_of_identical(self):
        model = CateModel(variant="median", children=[_const_model(2.0)] * 3)
        assert np.all(predict(model, np.zeros((3, 1))) == 2.0)

    def test_median_robust_to_outlier(self):
        model = CateModel(variant="median",
                          children=[_const_model(v) for v in (1.0, 100.0, 2.0)])
        assert np.all(predict(model, np.zeros((2, 1))) == 2.0)

    def test_median_bracketing(self):
        rng = np.random.default_rng(0)
        children = [_const_model(v) for v in rng.standard_normal(5)]
        model = CateModel(variant="median", children=children)
        x = np.zeros((4, 1))
        parts = np.stack([predict(c, x) for c in children])
        med = predict(model, x)
        assert np.all(med >= parts.min(axis=0)) and np.all(med <= parts.max(axis=0))

    def test_single_constant(self):
        assert np.all(predict(_const_model(7.0), np.zeros((3, 2))) == 7.0)


class TestFitSingle:
    def test_naive_t_beats_mean_baseline(self, fast_config):
        rng = np.random.default_rng(1)
        n = 240
        x = rng.standard_normal((n, 10))
        tau = x[:, 0]
        d = (rng.random(n) < 0.5).astype(float)
        y = tau * d + x[:, 1]  # noiseless additive outcome
        plan = make_folds(n, 1, seed=0)
        model = fit_single(x, d, y, rotations(plan, "naive")[0], "t",
                           fast_config, seed=2, strategy_name="naive")
        x_test = rng.standard_normal((400, 10))
        tau_test = x_test[:, 0]
        mse = np.mean((predict(model, x_test) - tau_test) ** 2)
        baseline = np.mean((tau.mean() - tau_test) ** 2)
        assert mse < baseline

    @pytest.mark.parametrize("meta", ["t", "dr", "r", "x"])
    def test_split5050_nuisances_never_see_estimation_rows(self, meta, fast_config):
        x, d, y, _ = _toy_data(seed=3)
        model = fit_estimator(x, d, y, meta, "split5050", fast_config, seed=4)
        assert check_leakage(model) == []
        nuisance_audits = [a for a in iter_audits(model)
                           if a.model in ("mu0", "mu1", "mu", "e")]
        assert nuisance_audits
        for audit in nuisance_audits:
            assert np.intersect1d(audit.train_rows, audit.estimation_rows).size == 0

    def test_oracle_nuisance_dr_calibration(self, fast_config):
        sc = dgp.Scenario(id="oracle-rct", n=100_000, p=10,
                          propensity="random_balanced", effect="linear",
                          test_size=4000)
        train, test = dgp.simulate(sc, seed=5)
        factory = _oracle_factory(
            t_of=lambda xs: xs[:, 0] + (xs[:, 1] > 0),
            g_of=dgp.baseline_g,
        )
        model = fit_estimator(train.x, train.d, train.y, "dr", "naive",
                              fast_config, seed=6, nuisance_factory=factory)
        pred = predict(model, test.x)
        slope = np.cov(test.tau_true, pred)[0, 1] / pred.var()
        assert 0.9 <= slope <= 1.1

    def test_degenerate_fold(self, fast_config):
        x, d, y, _ = _toy_data(seed=7)
        d_all_control = np.zeros_like(d)
        plan = make_folds(len(y), 1, seed=0)
        with pytest.raises(DegenerateFoldError):
            fit_single(x, d_all_control, y, rotations(plan, "naive")[0], "dr",
                       fast_config, seed=8)

    def test_invalid_learner_and_strategy(self, fast_config):
        x, d, y, _ = _toy_data(seed=9, n=60)
        with pytest.raises(ValueError):
            fit_estimator(x, d, y, "s", "naive", fast_config)
        with pytest.raises(ValueError):
            fit_estimator(x, d, y, "dr", "loo", fast_config)
        for bad in ("double_split", "double_split_cf", "fold5_combined",
                    "median_double_split_cf", "median_fold5_combined"):
            with pytest.raises(ValueError):
                fit_estimator(x, d, y, "t", bad, fast_config)


class TestCrossfit:
    def test_identical_children_equal_single(self, fast_config):
        model = CateModel(variant="crossfit_mean",
                          children=[_const_model(1.5), _const_model(1.5)])
        assert np.all(predict(model, np.zeros((5, 1))) == 1.5)

    def test_single_strategy_equals_first_cf_rotation(self, fast_config):
        x, d, y, _ = _toy_data(seed=10)
        single = fit_estimator(x, d, y, "r", "split5050", fast_config, seed=11)
        cf = fit_estimator(x, d, y, "r", "split5050_cf", fast_config, seed=11)
        grid = np.random.default_rng(12).standard_normal((50, x.shape[1]))
        assert np.array_equal(predict(single, grid), predict(cf.children[0], grid))

    def test_relabeling_folds_leaves_predictions_unchanged(self, fast_config):
        x, d, y, _ = _toy_data(seed=13)
        plan = make_folds(len(y), 2, seed=14)
        swapped = FoldPlan(k=2, assignment=1 - plan.assignment)
        a = fit_crossfit(x, d, y, plan, STRATEGIES["split5050_cf"], "r",
                         fast_config, seed=15)
        b = fit_crossfit(x, d, y, swapped, STRATEGIES["split5050_cf"], "r",
                         fast_config, seed=15)
        grid = np.random.default_rng(16).standard_normal((40, x.shape[1]))
        assert np.abs(predict(a, grid) - predict(b, grid)).max() < 1e-10

    def test_even_relabeling_double_split(self, fast_config):
        x, d, y, _ = _toy_data(seed=17, n=210)
        plan = make_folds(len(y), 3, seed=18)
        shifted = FoldPlan(k=3, assignment=(plan.assignment + 1) % 3)
        a = fit_crossfit(x, d, y, plan, STRATEGIES["double_split_cf"], "dr",
                         fast_config, seed=19)
        b = fit_crossfit(x, d, y, shifted, STRATEGIES["double_split_cf"], "dr",
                         fast_config, seed=19)
        grid = np.random.default_rng(20).standard_normal((30, x.shape[1]))
        assert np.abs(predict(a, grid) - predict(b, grid)).max() < 1e-10

    def test_pipeline_deterministic(self, fast_config):
        x, d, y, _ = _toy_data(seed=21)
        a = fit_estimator(x, d, y, "dr", "fold5_cf", fast_config, seed=22)
        b = fit_estimator(x, d, y, "dr", "fold5_cf", fast_config, seed=22)
        grid = np.random.default_rng(23).standard_normal((40, x.shape[1]))
        assert np.array_equal(predict(a, grid), predict(b, grid))


class TestCombined:
    def test_pooled_psi_equals_naive_psi_with_oracle_nuisances(self):
        # With fold-independent nuisances the out-of-fold pseudo-outcomes
        # must agree row-by-row with the naive ones.
        x, d, y, _ = _toy_data(seed=24, n=50)
        g = x[:, 1]
        t = x[:, 0]
        mu0, mu1, e = g, g + t, np.full(50, 0.5)
        naive_psi = pseudo_DR(y, d, mu0, mu1, e).psi
        plan = make_folds(50, 5, seed=25)
        pooled = np.empty(50)
        for rot in rotations(plan, "fold5_combined"):
            est = rot.estimation_rows
            pooled[est] = pseudo_DR(y[est], d[est], mu0[est], mu1[est], e[est]).psi
        assert np.allclose(pooled, naive_psi, atol=1e-12)

    def test_engine_psi_summary_matches_naive(self, fast_config):
        x, d, y, _ = _toy_data(seed=26, n=60)
        factory = _oracle_factory(t_of=lambda xs: xs[:, 0], g_of=lambda xs: xs[:, 1])
        combined = fit_estimator(x, d, y, "dr", "fold5_combined", fast_config,
                                 seed=27, nuisance_factory=factory)
        naive = fit_estimator(x, d, y, "dr", "naive", fast_config,
                              seed=28, nuisance_factory=factory)
        for key in ("mean", "sd", "min", "max", "n"):
            assert combined.diagnostics["psi"][key] == pytest.approx(
                naive.diagnostics["psi"][key], rel=1e-12)

    def test_constant_psi_predicts_constant(self, fast_config):
        rng = np.random.default_rng(29)
        n = 60
        x = rng.standard_normal((n, 4))
        d = (rng.random(n) < 0.5).astype(float)
        g = x[:, 1]
        y = g + 2.0 * d  # exactly mu_d with tau = 2
        factory = _oracle_factory(t_of=lambda xs: np.full(xs.shape[0], 2.0),
                                  g_of=lambda xs: xs[:, 1])
        model = fit_estimator(x, d, y, "dr", "fold5_combined", fast_config,
                              seed=30, nuisance_factory=factory)
        assert np.allclose(predict(model, rng.standard_normal((20, 4))), 2.0,
                           atol=1e-9)

    def test_row_accounting_n25(self, fast_config):
        x, d, y, _ = _toy_data(seed=31, n=25, p=3)
        model = fit_estimator(x, d, y, "r", "fold5_combined", fast_config, seed=32)
        assert model.diagnostics["final_rows"] == 25
        final = [a for a in iter_audits(model) if a.model == "final"][0]
        assert np.array_equal(np.sort(final.train_rows), np.arange(25))
        assert check_leakage(model) == []

    def test_t_learner_rejected(self, fast_config):
        x, d, y, _ = _toy_data(seed=33, n=50)
        plan = make_folds(50, 5, seed=0)
        with pytest.raises(ValueError):
            fit_combined(x, d, y, plan, STRATEGIES["fold5_combined"], "t",
                         fast_config)

    def test_x_combined_runs_and_blends(self, fast_config):
        x, d, y, _ = _toy_data(seed=34, n=200)
        model = fit_estimator(x, d, y, "x", "fold5_combined", fast_config, seed=35)
        pred = predict(model, np.random.default_rng(36).standard_normal((10, x.shape[1])))
        tau0 = model.predictor.tau0.predict(np.random.default_rng(36).standard_normal((10, x.shape[1])))
        tau1 = model.predictor.tau1.predict(np.random.default_rng(36).standard_normal((10, x.shape[1])))
        lo = np.minimum(tau0, tau1) - 1e-12
        hi = np.maximum(tau0, tau1) + 1e-12
        assert np.all(pred >= lo) and np.all(pred <= hi)


class TestMedian:
    def test_b1_equals_inner_model(self, fast_config):
        x, d, y, _ = _toy_data(seed=37)
        model = fit_estimator(x, d, y, "r", "median_split5050_cf", fast_config,
                              seed=38, b_iterations=1)
        grid = np.random.default_rng(39).standard_normal((30, x.shape[1]))
        assert np.array_equal(predict(model, grid), predict(model.children[0], grid))

    def test_children_are_fresh_partitions(self, fast_config):
        x, d, y, _ = _toy_data(seed=40)
        model = fit_estimator(x, d, y, "r", "median_split5050_cf", fast_config,
                              seed=41, b_iterations=3)
        seeds = [child.metadata["fold_seed"] for child in model.children]
        assert len(set(seeds)) == 3

    def test_b_must_be_positive(self, fast_config):
        x, d, y, _ = _toy_data(seed=42, n=60)
        with pytest.raises(ValueError):
            fit_estimator(x, d, y, "r", "median_split5050_cf", fast_config,
                          b_iterations=0)


class TestExcludeLinear:
    def test_every_stack_drops_linear_members(self, fast_config):
        from dataclasses import replace

        x, d, y, _ = _toy_data(seed=43)
        config = replace(fast_config, exclude_linear=True)
        model = fit_estimator(x, d, y, "dr", "split5050", config, seed=44)
        diag = model.diagnostics
        for name in ("mu0", "mu1", "e", "final"):
            assert len(diag[name]["weights"]) == 3  # mean + forest + boosting
