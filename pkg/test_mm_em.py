import logging

import numpy as np
import pytest

from rfavar.errors import EmptyGrid, SingularWeightedGram
from rfavar.data.transforms import standardize
from rfavar.estimation.estimator import RfavarEstimator, coarse_indices, grid_length, ic_multiplier
from rfavar.estimation.mm_em import (
    gls_factors, gradient_d, mm_em_step, neg_loglik, penalized_objective, soft_threshold, surrogate_objective,
)
from rfavar.models.dgp import DgpConfig
from rfavar.models.fit import EstimationState, FitOptions, IcCell, IcSurface, PenaltyPair
from rfavar.models.loadings import LoadingsMatrix
from rfavar.simulation.dgp import simulate

FAST = FitOptions(tol=1e-5, max_iter=300)


def _random_instance(rng, n, r):
    lam = rng.normal(size=(n, r))
    phi = rng.uniform(0.5, 2.0, size=n)
    z = rng.normal(size=(n, 3 * n))
    return lam, phi, z @ z.T / z.shape[1]


# ============================================================================
# soft_threshold
# ============================================================================

class TestSoftThreshold:

    @pytest.mark.parametrize("v,t,expected", [
        (0.5, 0.2, 0.3), (-0.1, 0.2, 0.0), (-0.7, 0.2, -0.5), (3.0, 1.0, 2.0), (1.0, 1.0, 0.0),
    ])
    def test_examples(self, v, t, expected):
        assert soft_threshold(v, t) == pytest.approx(expected, abs=1e-15)

    def test_exact_positive_zero(self):
        result = soft_threshold(np.array([-0.1, 0.1, -1.0]), 1.0)
        np.testing.assert_array_equal(result, 0.0)
        assert not np.any(np.signbit(result))

    def test_zero_threshold_is_identity(self, rng):
        v = rng.normal(size=10)
        np.testing.assert_array_equal(soft_threshold(v, 0.0), v)

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(1.0, -0.1)


# ============================================================================
# Likelihood and gradient
# ============================================================================

class TestNegLoglik:

    def test_empty_common_component(self):
        assert neg_loglik(np.zeros((4, 1)), np.eye(1), np.eye(4), np.eye(4)) == pytest.approx(4.0, abs=1e-12)

    def test_two_series_example(self):
        value = neg_loglik(np.array([[1.0], [1.0]]), np.eye(1), np.eye(2), np.eye(2))
        assert value == pytest.approx(np.log(3.0) + 4.0 / 3.0, abs=1e-12)

    def test_rotation_invariance(self, rng):
        lam, phi, s_x = _random_instance(rng, 8, 3)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        assert neg_loglik(lam @ q, np.eye(3), phi, s_x) == pytest.approx(neg_loglik(lam, np.eye(3), phi, s_x), abs=1e-10)

    def test_accepts_loadings_matrix(self, rng):
        lam, phi, s_x = _random_instance(rng, 6, 2)
        loadings = LoadingsMatrix.from_full(lam, 1)
        assert neg_loglik(loadings, np.eye(2), phi, s_x) == neg_loglik(lam, np.eye(2), phi, s_x)


class TestGradient:

    def test_single_series(self):
        d = gradient_d(np.array([[1.0]]), np.array([1.0]), np.array([[4.0]]))
        assert d[0, 0] == pytest.approx(-1.0, abs=1e-14)

    def test_vanishes_at_exact_fit(self, rng):
        lam, phi, _ = _random_instance(rng, 10, 2)
        s_x = lam @ lam.T + np.diag(phi)
        np.testing.assert_allclose(gradient_d(lam, phi, s_x), 0.0, atol=1e-12)

    def test_matches_finite_differences_of_surrogate(self, rng):
        h = 1e-6
        for _ in range(100):
            n = int(rng.integers(2, 21))
            r = int(rng.integers(1, min(4, n) + 1))
            lam, phi, s_x = _random_instance(rng, n, r)
            analytic = gradient_d(lam, phi, s_x)
            numeric = np.zeros_like(lam)
            for i in range(n):
                for j in range(r):
                    bump = np.zeros_like(lam)
                    bump[i, j] = h
                    numeric[i, j] = (surrogate_objective(lam + bump, lam, phi, s_x)
                                     - surrogate_objective(lam - bump, lam, phi, s_x)) / (2 * h)
            scale = max(np.max(np.abs(analytic)), 1.0)
            assert np.max(np.abs(numeric - analytic)) / scale <= 1e-5


# ============================================================================
# mm_em_step
# ============================================================================

class TestMmEmStep:

    def test_exact_fit_is_fixed_point(self, rng):
        lam, phi, _ = _random_instance(rng, 12, 2)
        s_x = lam @ lam.T + np.diag(phi)
        state = EstimationState(LoadingsMatrix.from_full(lam, 2), phi)
        new = mm_em_step(state, s_x, PenaltyPair(), c=0.01)
        np.testing.assert_allclose(new.loadings.full, lam, atol=1e-12)
        np.testing.assert_allclose(new.phi_e, phi, atol=1e-10)
        assert new.iteration == 1

    def test_large_penalty_zeroes_everything(self, rng):
        lam, phi, s_x = _random_instance(rng, 10, 3)
        state = EstimationState(LoadingsMatrix.from_full(lam, 2), phi)
        new = mm_em_step(state, s_x, PenaltyPair(1e6, 1e6), c=0.01)
        assert np.all(new.loadings.full == 0.0)
        assert np.all(new.phi_e >= 1e-8)

    def test_surrogate_never_increases(self, rng):
        for _ in range(100):
            n = int(rng.integers(3, 25))
            r = int(rng.integers(1, min(4, n) + 1))
            lam, phi, s_x = _random_instance(rng, n, r)
            penalties = PenaltyPair(float(rng.uniform(0, 0.5)), float(rng.uniform(0, 0.5)))
            state = EstimationState(LoadingsMatrix.from_full(lam, max(r - 1, 1)), phi)
            before, after = mm_em_step(state, s_x, penalties, c=0.05).surrogate
            assert after <= before

    def test_full_objective_never_increases(self, rng):
        for _ in range(100):
            n = int(rng.integers(3, 25))
            r = int(rng.integers(1, min(4, n) + 1))
            lam, phi, s_x = _random_instance(rng, n, r)
            penalties = PenaltyPair(float(rng.uniform(0, 0.5)), float(rng.uniform(0, 0.5)))
            state = EstimationState(LoadingsMatrix.from_full(lam, max(r - 1, 1)), phi)
            before = penalized_objective(state.loadings, phi, s_x, penalties)
            new = mm_em_step(state, s_x, penalties, c=float(rng.choice([0.01, 0.05, 0.5])))
            assert new.objective <= before + 1e-12 * max(1.0, abs(before))
            assert new.objective == pytest.approx(
                penalized_objective(new.loadings, new.phi_e, s_x, penalties), rel=1e-12, abs=1e-12)

    def test_halving_c_keeps_surrogate_descent(self, rng):
        for _ in range(50):
            lam, _, s_x = _random_instance(rng, 12, 2)
            lam, phi = 0.2 * lam, rng.uniform(1.0, 2.0, size=12)
            mu = np.array([0.1, 0.05])
            d = gradient_d(lam, phi, s_x)
            before = surrogate_objective(lam, lam, phi, s_x) + np.sum(mu * np.abs(lam))
            for c in (0.01, 0.005, 0.0025):
                stepped = soft_threshold(lam - c * d, c * mu)
                after = surrogate_objective(stepped, lam, phi, s_x) + np.sum(mu * np.abs(stepped))
                assert after <= before + 1e-10

    def test_rejects_nonpositive_step(self, rng):
        lam, phi, s_x = _random_instance(rng, 5, 1)
        with pytest.raises(ValueError):
            mm_em_step(EstimationState(LoadingsMatrix.from_full(lam, 1), phi), s_x, PenaltyPair(), c=0.0)


# ============================================================================
# gls_factors
# ============================================================================

class TestGlsFactors:

    def test_single_factor_example(self):
        f = gls_factors(np.array([[1.0], [2.0]]), np.array([1.0, 4.0]), np.array([[1.0], [2.0]]))
        assert f[0, 0] == pytest.approx(1.0, abs=1e-14)

    def test_identity_weights_is_least_squares(self, rng):
        lam = rng.normal(size=(15, 2))
        X = rng.normal(size=(15, 30))
        expected, *_ = np.linalg.lstsq(lam, X, rcond=None)
        np.testing.assert_allclose(gls_factors(lam, np.ones(15), X), expected.T, atol=1e-10)

    def test_noiseless_recovery(self, rng):
        lam = rng.normal(size=(20, 3))
        F = rng.normal(size=(40, 3))
        np.testing.assert_allclose(gls_factors(lam, rng.uniform(0.5, 2, 20), lam @ F.T), F, atol=1e-10)

    def test_zero_column(self, rng):
        lam = np.hstack([rng.normal(size=(10, 1)), np.zeros((10, 1))])
        with pytest.raises(SingularWeightedGram):
            gls_factors(lam, np.ones(10), rng.normal(size=(10, 5)))


# ============================================================================
# RfavarEstimator
# ============================================================================

class TestRfavarEstimator:

    def test_unpenalized_fit_stays_at_initialization(self, sparse_truth):
        X = sparse_truth.X
        X = (X - X.mean(axis=1, keepdims=True)) / X.std(axis=1, ddof=1, keepdims=True)
        G = np.zeros((X.shape[1], 0))
        init = RfavarEstimator(FitOptions(tol=1e-9, max_iter=20000)).initialize(X, G, 2)

        fit = RfavarEstimator(FitOptions(max_iter=1)).fit(X, G, 2, PenaltyPair(), init=init)

        assert np.linalg.norm(fit.loadings.latent - init.lambda_f) <= 1e-6
        np.testing.assert_allclose(fit.phi_e, init.phi_e, atol=1e-6)
        assert fit.loadings.r2 == 0

    def test_penalized_fit_reduces_objective(self, standardized_panel):
        X, G = standardized_panel
        fit = RfavarEstimator(FAST).fit(X, G, 2, PenaltyPair(0.1, 0.0))
        assert fit.objective_trace[-1] <= fit.objective_trace[0] + 1e-8
        assert all(after <= before for before, after in fit.surrogate_trace)
        assert fit.factors_f.shape == (X.shape[1], 2)
        s_x = X @ X.T / X.shape[1]
        assert fit.objective_trace[-1] == pytest.approx(
            penalized_objective(fit.loadings, fit.phi_e, s_x, fit.penalties), abs=1e-10)

    @pytest.mark.parametrize("seed", [1, 2, 3])
    @pytest.mark.parametrize("mu1", [0.0, 0.05, 0.1, 0.2])
    def test_objective_trace_is_monotone(self, seed, mu1):
        truth = simulate(DgpConfig(n_series=40, n_periods=100, r1=2, r2=1, zero_fraction=0.5, seed=seed))
        X, _, _ = standardize(truth.X)
        G, _, _ = standardize(truth.G.T)
        fit = RfavarEstimator(FitOptions(tol=1e-6, max_iter=200)).fit(X, G.T, 2, PenaltyPair(mu1, 0.05))
        assert np.all(np.diff(fit.objective_trace) <= 1e-8)

    def test_heavier_penalty_is_sparser(self, standardized_panel):
        X, G = standardized_panel
        estimator = RfavarEstimator(FAST)
        init = estimator.initialize(X, G, 2)
        light = estimator.fit(X, G, 2, PenaltyPair(0.0, 0.0), init=init)
        heavy = estimator.fit(X, G, 2, PenaltyPair(0.2, 0.0), init=init)
        assert heavy.loadings.nonzero_count < light.loadings.nonzero_count

    def test_rejects_zero_factors(self, standardized_panel):
        X, G = standardized_panel
        with pytest.raises(ValueError):
            RfavarEstimator(FAST).fit(X, G, 0, PenaltyPair())


class TestPenaltySelection:

    def test_multiplier_example(self):
        assert ic_multiplier(126, 384) == pytest.approx(0.2097, abs=1e-4)

    def test_singleton_grid(self, standardized_panel):
        X, G = standardized_panel
        penalties, surface = RfavarEstimator(FAST).select_penalties(X, G, 2, [0.0], [0.0])
        assert penalties == PenaltyPair(0.0, 0.0)
        assert len(surface.cells) == 1
        assert surface.cells[0].ok

    def test_surface_covers_grid(self, standardized_panel):
        X, G = standardized_panel
        estimator = RfavarEstimator(FAST)
        init = estimator.initialize(X, G, 2)
        penalties, surface = estimator.select_penalties(X, G, 2, [0.0, 0.05, 0.1], [0.0, 0.1], init=init)
        assert {(cell.mu1, cell.mu2) for cell in surface.cells} == {
            (mu1, mu2) for mu1 in (0.0, 0.05, 0.1) for mu2 in (0.0, 0.1)}
        best = min(cell.ic for cell in surface.cells if cell.ok)
        chosen = [cell for cell in surface.cells if (cell.mu1, cell.mu2) == (penalties.mu1, penalties.mu2)]
        assert chosen[0].ic == best
        assert surface.multiplier == pytest.approx(ic_multiplier(*X.shape))

    def test_cells_do_not_depend_on_evaluation_order(self, standardized_panel):
        X, G = standardized_panel
        estimator = RfavarEstimator(FAST)
        init = estimator.initialize(X, G, 2)
        _, forward = estimator.select_penalties(X, G, 2, [0.0, 0.05, 0.1], [0.0, 0.1], init=init)
        _, pooled = RfavarEstimator(FAST, n_jobs=2).select_penalties(X, G, 2, [0.0, 0.05, 0.1], [0.0, 0.1], init=init)
        assert pooled.cells == forward.cells
        # each cell is the fit a lone call would produce from the shared start
        for cell in reversed(forward.cells):
            alone = estimator.information_criterion(
                X, G, estimator.fit(X, G, 2, PenaltyPair(cell.mu1, cell.mu2), init=init))
            assert alone.ic == pytest.approx(cell.ic, rel=1e-12, abs=1e-12)
            assert alone.kappa == cell.kappa

    @pytest.mark.parametrize("grid1", [[], [0.1, 0.0], [-0.1]])
    def test_bad_grid(self, standardized_panel, grid1):
        X, G = standardized_panel
        with pytest.raises(EmptyGrid):
            RfavarEstimator(FAST).select_penalties(X, G, 2, grid1, [0.0])

    def test_ties_prefer_larger_penalties(self):
        surface = IcSurface(
            cells=[IcCell(0.0, 0.0, 1.0, 10, 0.5, True), IcCell(0.1, 0.0, 1.0, 8, 0.5, True),
                   IcCell(0.1, 0.1, 1.0, 7, 0.5, True), IcCell(0.2, 0.0, np.inf, 0, np.inf, False, error="failed")],
            multiplier=0.2,
        )
        best = surface.best()
        assert (best.mu1, best.mu2) == (0.1, 0.1)

    def test_default_grids(self, standardized_panel):
        X, G = standardized_panel
        estimator = RfavarEstimator(FitOptions(tol=1e-4, max_iter=100))
        grid1, grid2 = estimator.default_grids(X, G, 2, max_points=4)
        assert grid1[0] == 0.0 and grid2[0] == 0.0
        assert 1 <= len(grid1) <= 4 and 1 <= len(grid2) <= 4
        np.testing.assert_allclose(np.diff(grid1), 0.05)
        np.testing.assert_allclose(np.diff(grid2), 0.1)

    def test_default_grid_cap_is_logged(self, standardized_panel, caplog):
        X, G = standardized_panel
        estimator = RfavarEstimator(FitOptions(tol=1e-4, max_iter=100))
        with caplog.at_level(logging.WARNING, logger="rfavar.estimation.estimator"):
            grid1, _ = estimator.default_grids(X, G, 2, step1=1e-4, max_points=2)
        assert grid1 == [0.0, 1e-4]
        assert "max_points=2" in caplog.text

    def test_coarse_search_matches_full_search_on_short_grids(self, standardized_panel):
        X, G = standardized_panel
        estimator = RfavarEstimator(FAST)
        init = estimator.initialize(X, G, 2)
        full = estimator.select_penalties(X, G, 2, [0.0, 0.05, 0.1], [0.0, 0.1], init=init)
        coarse = estimator.search_penalties(X, G, 2, [0.0, 0.05, 0.1], [0.0, 0.1], init=init)
        assert coarse[0] == full[0]
        assert coarse[1].cells == full[1].cells

    def test_coarse_search_refines_around_the_coarse_winner(self, standardized_panel):
        X, G = standardized_panel
        estimator = RfavarEstimator(FAST)
        init = estimator.initialize(X, G, 2)
        grid1 = [round(0.02 * k, 12) for k in range(11)]
        penalties, surface = estimator.search_penalties(X, G, 2, grid1, [0.0], coarse_points=3, init=init)
        evaluated = [cell.mu1 for cell in surface.cells]
        assert evaluated == sorted(evaluated)
        assert {0.0, 0.1, 0.2} <= set(evaluated)
        assert len(evaluated) < len(grid1) or evaluated == grid1
        # the pick is the best of what was evaluated, and at least as good as the coarse winner
        best = min(cell.ic for cell in surface.cells if cell.ok)
        assert [c.ic for c in surface.cells if c.mu1 == penalties.mu1][0] == best

    @pytest.mark.parametrize("first_empty,max_points", [(1, 10), (3, 10), (4, 10), (9, 10), (None, 10), (None, 1)])
    def test_grid_length_finds_the_first_emptying_index(self, first_empty, max_points):
        calls = []

        def is_empty(index):
            calls.append(index)
            return first_empty is not None and index >= first_empty

        expected = max_points if first_empty is None else min(first_empty, max_points)
        assert grid_length(is_empty, max_points) == expected
        assert 0 not in calls
        assert len(calls) <= max_points

    def test_coarse_indices_keep_both_ends(self):
        assert coarse_indices(4, 6) == [0, 1, 2, 3]
        assert coarse_indices(11, 3) == [0, 5, 10]
        assert coarse_indices(40, 6)[0] == 0 and coarse_indices(40, 6)[-1] == 39

    @pytest.mark.slow
    def test_dense_truth_selects_no_latent_penalty(self):
        picks = []
        for seed in range(20):
            truth = simulate(DgpConfig(n_series=60, n_periods=200, r1=2, r2=1, zero_fraction=0.0, seed=100 + seed))
            X, _, _ = standardize(truth.X)
            G, _, _ = standardize(truth.G.T)
            penalties, _ = RfavarEstimator(FAST).select_penalties(X, G.T, 2, [0.0, 0.05, 0.1], [0.0])
            picks.append(penalties.mu1)
        assert picks.count(0.0) >= 14
