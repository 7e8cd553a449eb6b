import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catebench import dgp, metalearners as ml
from catebench.errors import DegenerateGroupError
from catebench.learners import LearnerConfig, LearnerSpec, candidate_specs
from catebench.ensemble import fit_stack


class TestPseudoT:
    def test_identical_means(self):
        out = ml.pseudo_T(np.ones(4), np.ones(4))
        assert np.all(out.psi == 0.0)
        assert np.all(out.weights == 1.0)

    def test_hand_value(self):
        out = ml.pseudo_T(np.array([1.0]), np.array([2.0]))
        assert out.psi[0] == 1.0

    @given(st.floats(-100, 100))
    @settings(max_examples=25, deadline=None)
    def test_translation_invariance(self, kappa):
        mu0 = np.array([0.5, -1.0, 2.0])
        mu1 = np.array([1.5, 0.0, -2.0])
        base = ml.pseudo_T(mu0, mu1).psi
        shifted = ml.pseudo_T(mu0 + kappa, mu1 + kappa).psi
        assert np.allclose(base, shifted, atol=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ml.pseudo_T(np.ones(3), np.ones(4))


class TestPseudoDR:
    def test_hand_value(self):
        out = ml.pseudo_DR(y=np.array([3.0]), d=np.array([1.0]),
                           mu0=np.array([1.0]), mu1=np.array([2.0]),
                           e=np.array([0.5]))
        assert out.psi[0] == pytest.approx(3.0)

    def test_zero_residuals_reduce_to_t(self):
        rng = np.random.default_rng(0)
        n = 50
        mu0 = rng.standard_normal(n)
        mu1 = rng.standard_normal(n)
        d = (rng.random(n) < 0.4).astype(float)
        y = np.where(d == 1.0, mu1, mu0)
        e = rng.uniform(0.2, 0.8, n)
        out = ml.pseudo_DR(y, d, mu0, mu1, e)
        assert np.array_equal(out.psi, mu1 - mu0)

    def test_oracle_nuisance_ate(self):
        sc = dgp.Scenario(id="rct-ate", n=100_000, propensity="random_balanced",
                          effect="linear", test_size=10)
        train, _ = dgp.simulate(sc, seed=1)
        mu0 = train.g_true
        mu1 = train.g_true + train.t_true
        out = ml.pseudo_DR(train.y, train.d, mu0, mu1, train.e_true)
        se = out.psi.std() / np.sqrt(train.n)
        assert abs(out.psi.mean() - train.tau_true.mean()) < 4 * se

    def test_boundary_e_rejected(self):
        with pytest.raises(ValueError):
            ml.pseudo_DR(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1),
                         np.array([1.0]))


class TestPseudoR:
    def test_hand_value(self):
        out = ml.pseudo_R(y=np.array([1.0]), d=np.array([1.0]),
                          mu=np.array([0.0]), e=np.array([0.5]))
        assert out.psi[0] == pytest.approx(2.0)
        assert out.weights[0] == pytest.approx(0.25)

    def test_zero_residual(self):
        y = np.array([1.0, 2.0])
        out = ml.pseudo_R(y, np.array([1.0, 0.0]), y, np.array([0.3, 0.7]))
        assert np.all(out.psi == 0.0)

    def test_weighted_final_matches_residual_on_residual(self, rng):
        n, p = 40, 2
        x = rng.standard_normal((n, p))
        d = (rng.random(n) < 0.5).astype(float)
        e = np.full(n, 0.5)
        mu = rng.standard_normal(n)
        y = mu + (d - e) * (x @ np.array([1.0, -2.0])) + 0.1 * rng.standard_normal(n)
        out = ml.pseudo_R(y, d, mu, e)
        stack = ml.final_stage(out, x, seed=0, candidates=[LearnerSpec("linear")])
        # Oracle: minimize sum [(y - mu) - (d - e) * (b0 + x b)]^2 directly.
        design = np.column_stack([np.ones(n), x]) * (d - e)[:, None]
        beta, *_ = np.linalg.lstsq(design, y - mu, rcond=None)
        grid = rng.standard_normal((20, p))
        oracle = np.column_stack([np.ones(20), grid]) @ beta
        assert np.abs(stack.predict(grid) - oracle).max() < 1e-8


class TestPseudoX:
    def test_hand_values(self):
        psi1, psi0 = ml.pseudo_X(
            y=np.array([3.0, 1.0]), d=np.array([1.0, 0.0]),
            mu0=np.array([1.0, 0.0]), mu1=np.array([2.0, 1.0]),
        )
        assert psi1.psi[0] == pytest.approx(2.0)  # treated: y - mu0
        assert psi0.psi[0] == pytest.approx(0.0)  # control: mu1 - y
        assert psi1.group == "treated" and psi0.group == "control"

    def test_degenerate_group(self):
        with pytest.raises(DegenerateGroupError):
            ml.pseudo_X(np.ones(3), np.ones(3), np.ones(3), np.ones(3))

    def test_oracle_constant_effect(self):
        rng = np.random.default_rng(2)
        n = 20_000
        kappa = 1.5
        g = rng.standard_normal(n)
        d = (rng.random(n) < 0.5).astype(float)
        y = g + kappa * d + 0.5 * rng.standard_normal(n)
        psi1, psi0 = ml.pseudo_X(y, d, mu0=g, mu1=g + kappa)
        assert psi1.psi.mean() == pytest.approx(kappa, abs=0.05)
        assert psi0.psi.mean() == pytest.approx(kappa, abs=0.05)


class TestBlendX:
    def test_hand_value(self):
        out = ml.blend_X(np.array([1.0]), np.array([3.0]), np.array([0.5]))
        assert out[0] == pytest.approx(2.0)

    def test_vertex(self):
        tau0 = np.array([1.0, -1.0])
        tau1 = np.array([5.0, 5.0])
        assert np.array_equal(ml.blend_X(tau0, tau1, np.ones(2)), tau0)

    def test_agreement(self):
        tau = np.array([0.3, 0.7])
        for g in (0.0, 0.25, 1.0):
            assert np.allclose(ml.blend_X(tau, tau, np.full(2, g)), tau)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            ml.blend_X(np.zeros(1), np.zeros(1), np.array([1.5]))


class TestFinalStage:
    def test_unit_weights_match_unweighted(self, rng, fast_config):
        n = 60
        x = rng.standard_normal((n, 3))
        psi_vals = x[:, 0] + rng.standard_normal(n)
        psi = ml.PseudoOutcome(psi=psi_vals, weights=np.ones(n))
        a = ml.final_stage(psi, x, fast_config, seed=3)
        b = fit_stack(
            candidate_specs(fast_config), x, psi_vals,
            seed=3, clip=fast_config.prob_clip,
        )
        grid = rng.standard_normal((10, 3))
        assert np.array_equal(a.predict(grid), b.predict(grid))

    def test_constant_target_predicts_constant(self, rng, fast_config):
        n = 40
        x = rng.standard_normal((n, 3))
        psi = ml.PseudoOutcome(psi=np.full(n, 2.5), weights=np.ones(n))
        model = ml.final_stage(psi, x, fast_config, seed=1)
        assert np.allclose(model.predict(rng.standard_normal((10, 3))), 2.5, atol=1e-9)

    def test_weight_rescaling_invariance(self, rng):
        n = 30
        x = rng.standard_normal((n, 2))
        d = (rng.random(n) < 0.5).astype(float)
        e = np.full(n, 0.5)
        y = (d - e) * x[:, 0] + 0.1 * rng.standard_normal(n)
        out = ml.pseudo_R(y, d, np.zeros(n), e)
        scaled = ml.PseudoOutcome(psi=out.psi, weights=17.0 * out.weights)
        a = ml.final_stage(out, x, seed=0, candidates=[LearnerSpec("linear")])
        b = ml.final_stage(scaled, x, seed=0, candidates=[LearnerSpec("linear")])
        grid = rng.standard_normal((15, 2))
        assert np.abs(a.predict(grid) - b.predict(grid)).max() < 1e-8

    def test_empty_fold(self, fast_config):
        psi = ml.PseudoOutcome(psi=np.zeros(0), weights=np.zeros(0))
        with pytest.raises(ValueError):
            ml.final_stage(psi, np.zeros((0, 2)), fast_config)
