"""
Majorize-minimize EM for L1-penalized quasi-maximum-likelihood loadings.

Each sweep majorizes log|Sigma| by its tangent plane at the current iterate,
takes one proximal-gradient step on the loadings (soft-thresholding with
c * mu1 for the latent block and c * mu2 for the observed block), then
updates the diagonal idiosyncratic variances with the EM formula. A sweep
is only accepted when the full penalized objective does not increase.
Sigma_H is fixed to the identity because all series are standardized.
"""
import logging
import warnings
from dataclasses import replace

import numpy as np
from scipy import linalg

from rfavar._constants import VARIANCE_FLOOR
from rfavar.errors import ConvergenceWarning, NotPositiveDefinite, SingularWeightedGram
from rfavar.models.fit import EstimationState, FitOptions, PenaltyPair
from rfavar.models.loadings import LoadingsMatrix
from rfavar.utils.linalg import is_well_conditioned

logger = logging.getLogger(__name__)

MAX_HALVINGS = 40
MONOTONE_HALVINGS = 10
MONOTONE_SLACK = 1e-12


def soft_threshold(v, t):
    """sign(v) * max(|v| - t, 0), with an exact +0.0 wherever |v| <= t."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("Threshold must be nonnegative")
    v_arr = np.asarray(v, dtype=float)
    shrunk = np.where(np.abs(v_arr) <= t, 0.0, v_arr - np.sign(v_arr) * t)
    if np.ndim(v) == 0 and np.ndim(t) == 0:
        return float(shrunk)
    return shrunk


class _FactorCovariance:
    """Sigma = Lambda Lambda' + diag(phi), inverted through the Woodbury identity when N > 3r."""

    def __init__(self, lam: np.ndarray, phi: np.ndarray):
        phi = np.asarray(phi, dtype=float)
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise NotPositiveDefinite("Idiosyncratic variances must be positive and finite")
        self.lam = lam
        self.phi = phi
        n, r = lam.shape
        self.woodbury = n > 3 * r
        try:
            if self.woodbury:
                self.scaled = lam / phi[:, None]
                self.core = linalg.cho_factor(np.eye(r) + lam.T @ self.scaled)
            else:
                self.chol = linalg.cho_factor(lam @ lam.T + np.diag(phi))
        except linalg.LinAlgError as e:
            raise NotPositiveDefinite(f"Model covariance is not positive definite: {e}") from e

    def solve(self, m: np.ndarray) -> np.ndarray:
        """Sigma^{-1} m."""
        if not self.woodbury:
            return linalg.cho_solve(self.chol, m)
        inv_phi = 1.0 / self.phi
        scaled_m = m * inv_phi[:, None] if m.ndim == 2 else m * inv_phi
        return scaled_m - self.scaled @ linalg.cho_solve(self.core, self.scaled.T @ m)

    def logdet(self) -> float:
        if self.woodbury:
            return float(np.sum(np.log(self.phi)) + 2.0 * np.sum(np.log(np.diag(self.core[0]))))
        return float(2.0 * np.sum(np.log(np.diag(self.chol[0]))))

    def trace_inv(self, s_x: np.ndarray) -> float:
        """tr(S_x Sigma^{-1})."""
        if not self.woodbury:
            return float(np.trace(linalg.cho_solve(self.chol, s_x)))
        quad = self.scaled.T @ s_x @ self.scaled
        return float(np.sum(np.diag(s_x) / self.phi) - np.trace(linalg.cho_solve(self.core, quad)))


def _as_full(loadings: LoadingsMatrix | np.ndarray) -> np.ndarray:
    if isinstance(loadings, LoadingsMatrix):
        return loadings.full
    return np.atleast_2d(np.asarray(loadings, dtype=float))


def neg_loglik(loadings: LoadingsMatrix | np.ndarray, sigma_h: np.ndarray, sigma_e: np.ndarray, s_x: np.ndarray) -> float:
    """log|Lambda Sigma_H Lambda' + Sigma_e| + tr(S_x (Lambda Sigma_H Lambda' + Sigma_e)^{-1})."""
    lam = _as_full(loadings)
    sigma_e = np.diag(sigma_e) if np.ndim(sigma_e) == 1 else np.asarray(sigma_e, dtype=float)
    sigma = lam @ np.asarray(sigma_h, dtype=float) @ lam.T + sigma_e
    try:
        chol = linalg.cho_factor((sigma + sigma.T) / 2)
    except linalg.LinAlgError as e:
        raise NotPositiveDefinite(f"Model covariance is not positive definite: {e}") from e
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    return float(logdet + np.trace(linalg.cho_solve(chol, s_x)))


def _penalty(lam: np.ndarray, r1: int, penalties: PenaltyPair) -> float:
    return float(penalties.mu1 * np.abs(lam[:, :r1]).sum() + penalties.mu2 * np.abs(lam[:, r1:]).sum())


def penalized_objective(loadings: LoadingsMatrix, phi_e: np.ndarray, s_x: np.ndarray, penalties: PenaltyPair) -> float:
    """Full penalized problem: likelihood with Sigma_H = I plus both L1 terms."""
    lam = loadings.full
    cov = _FactorCovariance(lam, phi_e)
    return cov.logdet() + cov.trace_inv(s_x) + _penalty(lam, loadings.r1, penalties)


def surrogate_objective(lam: np.ndarray, lambda_m: np.ndarray, phi_e_m: np.ndarray, s_x: np.ndarray) -> float:
    """Smooth part of the majorized likelihood at iterate m, evaluated at ``lam``."""
    cov_m = _FactorCovariance(lambda_m, phi_e_m)
    cov = _FactorCovariance(lam, phi_e_m)
    tangent = 2.0 * np.sum(cov_m.solve(lambda_m) * (lam - lambda_m))
    return cov_m.logdet() + tangent + cov.trace_inv(s_x)


def surrogate_gradient(lam: np.ndarray, lambda_m: np.ndarray, phi_e_m: np.ndarray, s_x: np.ndarray) -> np.ndarray:
    cov_m = _FactorCovariance(lambda_m, phi_e_m)
    cov = _FactorCovariance(lam, phi_e_m)
    sinv_lam = cov.solve(lam)
    return 2.0 * cov_m.solve(lambda_m) - 2.0 * cov.solve(s_x @ sinv_lam)


def gradient_d(lambda_m: LoadingsMatrix | np.ndarray, phi_e_m: np.ndarray, s_x: np.ndarray) -> np.ndarray:
    """D = 2 (Sigma^{-1} - Sigma^{-1} S_x Sigma^{-1}) Lambda_m, an N x r matrix."""
    lam = _as_full(lambda_m)
    cov = _FactorCovariance(lam, phi_e_m)
    sinv_lam = cov.solve(lam)
    return 2.0 * (sinv_lam - cov.solve(s_x @ sinv_lam))


def _column_penalties(r1: int, r: int, penalties: PenaltyPair) -> np.ndarray:
    mu = np.full(r, penalties.mu2)
    mu[:r1] = penalties.mu1
    return mu


def mm_em_step(
        state: EstimationState,
        s_x: np.ndarray,
        penalties: PenaltyPair,
        c: float,
        inner_steps: int = 1,
        backtrack: bool = True,
) -> EstimationState:
    """
    One sweep: proximal-gradient loadings update(s), then the EM update of Phi_e.
    The full penalized objective never rises: when the joint update would raise it,
    the sweep falls back to the loadings step with Phi_e kept, then to shorter steps,
    then to the exact Phi_e update with the loadings held fixed.
    """
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    lambda_m = state.loadings.full
    r1 = state.loadings.r1
    phi_m = state.phi_e
    mu = _column_penalties(r1, lambda_m.shape[1], penalties)

    cov_m = _FactorCovariance(lambda_m, phi_m)
    sinv_lam_m = cov_m.solve(lambda_m)
    s_sinv_lam_m = s_x @ sinv_lam_m
    d = 2.0 * (sinv_lam_m - cov_m.solve(s_sinv_lam_m))

    def objective(lam: np.ndarray) -> float:
        tangent = 2.0 * np.sum(sinv_lam_m * (lam - lambda_m))
        return cov_m.logdet() + tangent + _FactorCovariance(lam, phi_m).trace_inv(s_x) + _penalty(lam, r1, penalties)

    before = objective(lambda_m)
    lam, current, step = lambda_m, before, c
    for inner in range(inner_steps):
        grad = d if inner == 0 else surrogate_gradient(lam, lambda_m, phi_m, s_x)
        step = c
        for _ in range(MAX_HALVINGS):
            candidate = soft_threshold(lam - step * grad, step * mu)
            value = objective(candidate)
            if not backtrack or value <= current:
                lam, current = candidate, value
                break
            step /= 2.0
        else:
            logger.debug("No descent step found at sweep %d; loadings kept", state.iteration + 1)
            break

    def full_objective(lam: np.ndarray, phi: np.ndarray) -> float:
        cov = _FactorCovariance(lam, phi)
        return cov.logdet() + cov.trace_inv(s_x) + _penalty(lam, r1, penalties)

    def em_variances(lam: np.ndarray) -> np.ndarray:
        # diag[S_x - Lambda_{m+1} Lambda_m' Sigma_m^{-1} S_x]
        return np.maximum(np.diag(s_x) - np.einsum("ij,ij->i", lam, s_sinv_lam_m), VARIANCE_FLOOR)

    def fixed_loading_variances() -> np.ndarray:
        # exact EM update of Phi_e with Lambda held at Lambda_m
        second_moment = np.eye(lambda_m.shape[1]) - sinv_lam_m.T @ lambda_m + sinv_lam_m.T @ s_sinv_lam_m
        phi = (np.diag(s_x) - 2.0 * np.einsum("ij,ij->i", lambda_m, s_sinv_lam_m)
               + np.einsum("ij,ij->i", lambda_m @ second_moment, lambda_m))
        return np.maximum(phi, VARIANCE_FLOOR)

    def candidates():
        yield lam, current, em_variances(lam)
        yield lam, current, phi_m
        shrink = step
        for _ in range(MONOTONE_HALVINGS):
            shrink /= 2.0
            lam_s = soft_threshold(lambda_m - shrink * d, shrink * mu)
            value = objective(lam_s)
            if value <= before:
                yield lam_s, value, em_variances(lam_s)
        yield lambda_m, before, fixed_loading_variances()

    start = state.objective if state.objective is not None else full_objective(lambda_m, phi_m)
    limit = start + MONOTONE_SLACK * max(1.0, abs(start))
    accepted = (lambda_m, before, phi_m, start)
    for rank, (lam_c, value, phi_c) in enumerate(candidates()):
        full = full_objective(lam_c, phi_c)
        if full <= limit:
            accepted = (lam_c, value, phi_c, full)
            if rank:
                logger.debug("Sweep %d fell back to candidate %d to keep the objective monotone",
                             state.iteration + 1, rank)
            break
    else:
        logger.debug("Sweep %d left the iterate unchanged", state.iteration + 1)
    lam, current, phi, full = accepted

    return EstimationState(
        loadings=LoadingsMatrix.from_full(lam, r1),
        phi_e=phi,
        iteration=state.iteration + 1,
        step_size=step,
        surrogate=(before, current),
        objective=full,
    )


def run_mm_em(
        s_x: np.ndarray,
        initial: EstimationState,
        penalties: PenaltyPair,
        options: FitOptions,
) -> tuple[EstimationState, list[float], list[tuple[float, float]], bool]:
    """
    Iterate sweeps until the spectral norms of the latent-loading and Phi_e changes
    fall below tol, or max_iter is reached.
    Returns:
        final state, penalized objective per iteration (initial point first),
        surrogate (before, after) per sweep, converged flag
    """
    state = replace(initial, objective=penalized_objective(initial.loadings, initial.phi_e, s_x, penalties))
    objective_trace = [state.objective]
    surrogate_trace = []
    converged = False

    for _ in range(options.max_iter):
        new_state = mm_em_step(state, s_x, penalties, options.c, options.inner_steps, options.backtrack)
        objective_trace.append(new_state.objective)
        surrogate_trace.append(new_state.surrogate)

        delta_latent = np.linalg.norm(new_state.loadings.latent - state.loadings.latent, ord=2)
        delta_phi = np.max(np.abs(new_state.phi_e - state.phi_e))
        state = new_state
        if delta_latent < options.tol and delta_phi < options.tol:
            converged = True
            break

    if not converged:
        message = f"MM-EM stopped at max_iter={options.max_iter} before reaching tol={options.tol}"
        logger.warning(message)
        warnings.warn(message, ConvergenceWarning, stacklevel=2)
    else:
        logger.debug("MM-EM converged after %d sweeps", state.iteration)
    return state, objective_trace, surrogate_trace, converged


def gls_factors(lambda_f: np.ndarray, phi_e: np.ndarray, X: np.ndarray) -> np.ndarray:
    """f_t = (Lambda' Phi^-1 Lambda)^-1 Lambda' Phi^-1 x_t for every t, as T x r1."""
    lambda_f = np.atleast_2d(np.asarray(lambda_f, dtype=float))
    phi_e = np.asarray(phi_e, dtype=float)
    if np.any(phi_e <= 0):
        raise SingularWeightedGram("Weights require strictly positive idiosyncratic variances")
    weighted = lambda_f / phi_e[:, None]
    gram = lambda_f.T @ weighted
    if not is_well_conditioned(gram):
        raise SingularWeightedGram("Lambda' Phi^-1 Lambda is singular; a latent loading column may be all zero")
    return linalg.solve(gram, weighted.T @ X, assume_a="pos").T
