import numpy as np
import pytest

from rfavar.dynamics.bootstrap import bootstrap_irf
from rfavar.dynamics.identification import apply_ira
from rfavar.dynamics.impulse import (
    accumulate_by_code, accumulate_paths, impulse_responses, irf_factors, irf_observables, rescale_to_original_units,
    resolve_shock_index,
)
from rfavar.dynamics.var_dynamics import fit_var
from rfavar.errors import BadScale, BadShockIndex, CodeLengthMismatch
from rfavar.models.fit import PenaltyPair, RfavarFit
from rfavar.models.identification import IdentifiedModel, RotationPair
from rfavar.models.irf import BootstrapOptions, IrfResult
from rfavar.models.loadings import LoadingsMatrix
from rfavar.models.scheme import Scheme
from rfavar.models.var import VarModel


def _latent_model(phi: np.ndarray, loadings: np.ndarray) -> IdentifiedModel:
    """Latent factors only, no rotation: responses are loadings @ phi^h @ e."""
    r = phi.shape[0]
    radius = float(np.max(np.abs(np.linalg.eigvals(phi))))
    var = VarModel(p=1, phi=[phi], omega=np.eye(r), residuals=np.zeros((0, r)), companion_radius=radius)
    return IdentifiedModel(
        loadings_hat=LoadingsMatrix(loadings, np.zeros((loadings.shape[0], 0))),
        factors_hat=np.zeros((10, r)),
        var_hat=var,
        omega_star=np.eye(r),
        scheme=Scheme.IRA,
        column_order=list(range(r)),
        signs=np.ones(r),
        rotation=RotationPair(np.eye(r), np.eye(r), Scheme.IRA),
    )


def _scalar_model(phi: float = 0.5, loading: float = 2.0) -> IdentifiedModel:
    return _latent_model(np.array([[phi]]), np.array([[loading]]))


def _truth_fit(truth) -> RfavarFit:
    return RfavarFit(
        loadings=truth.loadings,
        phi_e=np.ones(truth.X.shape[0]),
        factors_f=truth.F,
        objective_trace=[0.0],
        penalties=PenaltyPair(),
        iterations=1,
        converged=True,
    )


@pytest.fixture(scope="module")
def identified(sparse_truth):
    fit = _truth_fit(sparse_truth)
    var = fit_var(sparse_truth.H, 1)
    return fit, var, apply_ira(fit, sparse_truth.G, var)


# ============================================================================
# Point responses
# ============================================================================

class TestImpulseResponses:

    def test_scalar_chain(self):
        np.testing.assert_allclose(irf_observables(_scalar_model(), 3, 0)[:, 0], [2.0, 1.0, 0.5, 0.25], atol=1e-15)

    def test_horizon_zero_is_impact_matrix(self, identified):
        _, _, model = identified
        result = impulse_responses(model, 0, -1)
        np.testing.assert_allclose(result.observable_irf[0], model.loadings_hat.full[:, -1], atol=1e-14)
        np.testing.assert_allclose(result.factor_irf[0], model.rotation.a_inv[:, -1], atol=1e-14)
        assert result.h_max == 0
        assert result.shock_index == 2

    def test_observables_are_loadings_times_factors(self, identified, sparse_truth):
        _, _, model = identified
        # factor responses come in relabeled [F G] coordinates
        factors = irf_factors(model, 6, 0)
        d = np.eye(3)
        d[:2, :2] = np.eye(2)[model.column_order] * model.signs[:, None]
        unrotated = np.hstack([sparse_truth.loadings.latent @ d[:2, :2].T, sparse_truth.loadings.observed])
        np.testing.assert_allclose(irf_observables(model, 6, 0), factors @ unrotated.T, atol=1e-10)

    def test_linear_in_shock_size(self, identified):
        _, _, model = identified
        np.testing.assert_allclose(irf_observables(model, 5, 1, 2.0), 2.0 * irf_observables(model, 5, 1), atol=1e-13)

    def test_shapes(self, identified, sparse_truth):
        _, _, model = identified
        result = impulse_responses(model, 12, -1)
        assert result.factor_irf.shape == (13, 3)
        assert result.observable_irf.shape == (13, sparse_truth.X.shape[0])
        np.testing.assert_array_equal(result.horizons, np.arange(13))

    def test_responses_decay_geometrically(self, rng):
        # non-normal: the transient overshoots before the spectral radius takes over
        phi = np.array([[0.9, 2.0], [0.0, 0.5]])
        loadings = rng.normal(size=(5, 2))
        eigenvalues, vectors = np.linalg.eig(phi)
        bound = np.linalg.norm(loadings, 2) * np.linalg.cond(vectors) * np.max(np.abs(eigenvalues)) ** np.arange(51)
        responses = np.linalg.norm(irf_observables(_latent_model(phi, loadings), 50, 1), axis=1)
        assert np.all(responses <= bound * (1.0 + 1e-10))
        assert responses[50] <= 1e-1 * responses.max()
        assert np.max(np.linalg.norm(irf_factors(_latent_model(phi, loadings), 50, 1), axis=1)) > 1.0

    @pytest.mark.parametrize("index", [3, -4, 10])
    def test_bad_shock_index(self, index):
        with pytest.raises(BadShockIndex):
            resolve_shock_index(index, 3)

    def test_negative_index_counts_from_end(self):
        assert resolve_shock_index(-1, 3) == 2


# ============================================================================
# Accumulation and rescaling
# ============================================================================

class TestAccumulation:

    def test_orders_by_code(self):
        paths = np.ones((4, 3))
        np.testing.assert_array_equal(accumulate_paths(paths, np.array([0, 1, 2])),
                                      [[1, 1, 1], [1, 2, 3], [1, 3, 6], [1, 4, 10]])

    def test_log_codes_match_plain_codes(self):
        irf = IrfResult(np.zeros((3, 1)), np.ones((3, 2)), 0, 1.0)
        plain = accumulate_by_code(irf, [2, 3])
        logged = accumulate_by_code(irf, [5, 6])
        np.testing.assert_array_equal(plain.observable_irf, logged.observable_irf)

    def test_differences_undo_accumulation(self, rng):
        irf = IrfResult(np.zeros((6, 1)), rng.normal(size=(6, 2)), 0, 1.0)
        levels = accumulate_by_code(irf, [2, 3]).observable_irf
        np.testing.assert_allclose(np.diff(levels[:, 0], prepend=0.0), irf.observable_irf[:, 0], atol=1e-14)
        recovered = np.diff(np.diff(levels[:, 1], prepend=0.0), prepend=0.0)
        np.testing.assert_allclose(recovered, irf.observable_irf[:, 1], atol=1e-14)

    def test_not_accumulated_twice(self):
        irf = IrfResult(np.zeros((3, 1)), np.ones((3, 1)), 0, 1.0)
        once = accumulate_by_code(irf, [2])
        twice = accumulate_by_code(once, [2])
        np.testing.assert_array_equal(twice.observable_irf, once.observable_irf)
        assert twice.accumulated.tolist() == [True]

    def test_bands_accumulated_bound_by_bound(self):
        irf = IrfResult(np.zeros((3, 1)), np.ones((3, 1)), 0, 1.0, ci_lower=np.zeros((3, 1)),
                        ci_upper=2 * np.ones((3, 1)))
        result = accumulate_by_code(irf, [2])
        np.testing.assert_array_equal(result.ci_upper[:, 0], [2, 4, 6])

    def test_code_length(self):
        irf = IrfResult(np.zeros((3, 1)), np.ones((3, 2)), 0, 1.0)
        with pytest.raises(CodeLengthMismatch):
            accumulate_by_code(irf, [1])


class TestRescale:

    def test_quarter_std_scales_by_four(self):
        irf = IrfResult(np.ones((2, 2)), np.ones((2, 3)), 1, 1.0)
        result = rescale_to_original_units(irf, 0.25, 1.0)
        np.testing.assert_array_equal(result.observable_irf, 4.0)
        np.testing.assert_array_equal(result.factor_irf, 4.0)
        assert result.shock_size_standardized == 4.0

    def test_basis_points(self):
        irf = IrfResult(np.ones((2, 1)), np.ones((2, 1)), 0, 1.0)
        result = rescale_to_original_units(irf, 0.5, 100.0 / 100.0)
        np.testing.assert_array_equal(result.observable_irf, 2.0)

    def test_series_units(self):
        irf = IrfResult(np.ones((2, 1)), np.ones((2, 2)), 0, 1.0)
        result = rescale_to_original_units(irf, 1.0, 1.0, series_stds=np.array([2.0, 3.0]))
        np.testing.assert_array_equal(result.observable_irf, [[2.0, 3.0], [2.0, 3.0]])

    def test_negative_shock_swaps_bands(self):
        irf = IrfResult(np.ones((2, 1)), np.ones((2, 1)), 0, 1.0, ci_lower=np.zeros((2, 1)),
                        ci_upper=2 * np.ones((2, 1)))
        result = rescale_to_original_units(irf, 1.0, -1.0)
        np.testing.assert_array_equal(result.ci_lower, -2.0)
        np.testing.assert_array_equal(result.ci_upper, 0.0)

    @pytest.mark.parametrize("std", [0.0, -1.0, np.nan, np.inf])
    def test_bad_std(self, std):
        irf = IrfResult(np.ones((2, 1)), np.ones((2, 1)), 0, 1.0)
        with pytest.raises(BadScale):
            rescale_to_original_units(irf, std, 1.0)


# ============================================================================
# Bootstrap bands
# ============================================================================

class TestBootstrap:

    def test_single_replication(self, identified, sparse_truth):
        fit, var, _ = identified
        result = bootstrap_irf(fit, sparse_truth.G, var, BootstrapOptions(n_boot=1, h_max=4, seed=3))
        np.testing.assert_array_equal(result.ci_lower, result.ci_upper)
        assert result.n_boot == 1
        assert result.n_dropped == 0

    def test_same_seed_same_bands(self, identified, sparse_truth):
        fit, var, _ = identified
        options = BootstrapOptions(n_boot=20, h_max=6, seed=9)
        first = bootstrap_irf(fit, sparse_truth.G, var, options)
        second = bootstrap_irf(fit, sparse_truth.G, var, options)
        np.testing.assert_array_equal(first.ci_lower, second.ci_lower)
        np.testing.assert_array_equal(first.factor_upper, second.factor_upper)

    def test_point_estimate_matches_impulse_responses(self, identified, sparse_truth):
        fit, var, model = identified
        result = bootstrap_irf(fit, sparse_truth.G, var, BootstrapOptions(n_boot=10, h_max=6, seed=1))
        np.testing.assert_allclose(result.observable_irf, irf_observables(model, 6, -1), atol=1e-12)
        assert np.all(result.ci_lower <= result.ci_upper)

    def test_workers_match_sequential(self, identified, sparse_truth):
        fit, var, _ = identified
        sequential = bootstrap_irf(fit, sparse_truth.G, var, BootstrapOptions(n_boot=8, h_max=3, seed=5))
        parallel = bootstrap_irf(fit, sparse_truth.G, var, BootstrapOptions(n_boot=8, h_max=3, seed=5, n_jobs=2))
        np.testing.assert_array_equal(sequential.ci_lower, parallel.ci_lower)
        np.testing.assert_array_equal(sequential.ci_upper, parallel.ci_upper)

    def test_codes_accumulate_each_draw(self, identified, sparse_truth):
        fit, var, _ = identified
        n = sparse_truth.X.shape[0]
        options = BootstrapOptions(n_boot=10, h_max=5, seed=2)
        plain = bootstrap_irf(fit, sparse_truth.G, var, options)
        levels = bootstrap_irf(fit, sparse_truth.G, var, options, codes=[2] * n)
        np.testing.assert_allclose(levels.observable_irf, np.cumsum(plain.observable_irf, axis=0), atol=1e-12)
        assert levels.accumulated.all()

    @pytest.mark.slow
    def test_bands_cover_the_true_response(self, sparse_truth):
        phi = np.array([[0.5, 0.1, 0.0], [0.0, 0.4, 0.1], [0.1, 0.0, 0.3]])
        omega = np.array([[1.0, 0.3, 0.2], [0.3, 1.0, 0.1], [0.2, 0.1, 1.0]])
        chol = np.linalg.cholesky(omega)
        true_var = VarModel(p=1, phi=[phi], omega=omega, residuals=np.zeros((0, 3)),
                            companion_radius=float(np.max(np.abs(np.linalg.eigvals(phi)))))
        rng = np.random.default_rng(42)
        n_reps, t, burn_in, h_max = 40, 300, 100, 12
        covered = np.zeros(h_max + 1)
        for rep in range(n_reps):
            shocks = rng.standard_normal((burn_in + t, 3)) @ chol.T
            path = np.zeros((burn_in + t, 3))
            for step in range(1, burn_in + t):
                path[step] = phi @ path[step - 1] + shocks[step]
            H = path[burn_in:]
            fit = RfavarFit(sparse_truth.loadings, np.ones(sparse_truth.X.shape[0]), H[:, :2], [0.0], PenaltyPair(), 1,
                            True)
            G = H[:, 2:]
            truth = irf_factors(apply_ira(fit, G, true_var), h_max, -1)
            result = bootstrap_irf(fit, G, fit_var(H, 1), BootstrapOptions(n_boot=200, h_max=h_max, seed=rep))
            inside = (result.factor_lower <= truth + 1e-12) & (truth <= result.factor_upper + 1e-12)
            covered += inside.mean(axis=1)
        coverage = covered / n_reps
        assert np.all(coverage[1:] >= 0.5), coverage

    def test_code_length(self, identified, sparse_truth):
        fit, var, _ = identified
        with pytest.raises(CodeLengthMismatch):
            bootstrap_irf(fit, sparse_truth.G, var, BootstrapOptions(n_boot=2, h_max=2), codes=[1, 2])
