import logging
import warnings

import numpy as np
from scipy import linalg

from rfavar._constants import DEFAULT_C, VARIANCE_FLOOR
from rfavar.errors import ConvergenceWarning, RankDeficient, SingularGram
from rfavar.estimation.mm_em import gls_factors, run_mm_em
from rfavar.models.fit import EstimationState, FitOptions, InitState, PenaltyPair
from rfavar.models.loadings import LoadingsMatrix
from rfavar.models.scheme import SeedMethod
from rfavar.utils.linalg import is_well_conditioned

logger = logging.getLogger(__name__)


def _sample_cov(X: np.ndarray) -> np.ndarray:
    return X @ X.T / X.shape[1]


def _top_eigen(s_x: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    eigenvalues, eigenvectors = linalg.eigh(s_x)
    order = np.argsort(eigenvalues)[::-1]
    return eigenvalues[order][:r], eigenvectors[:, order][:, :r]


def pca_factors(X: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Principal-component factors with Lambda'Lambda/N = I and F'F/T diagonal.
    Returns:
        loadings N x r (sqrt(N) times the top eigenvectors of XX'/T), factors T x r
    """
    X = np.asarray(X, dtype=float)
    n, t = X.shape
    if not 1 <= r <= min(n, t):
        raise ValueError(f"r must lie in [1, min(N, T)] = [1, {min(n, t)}], got {r}")

    eigenvalues, eigenvectors = _top_eigen(_sample_cov(X), r)
    if eigenvalues[-1] <= max(eigenvalues[0], 1.0) * n * np.finfo(float).eps:
        raise RankDeficient(f"Fewer than {r} positive eigenvalues in the sample covariance")

    # largest-magnitude entry of each loading column is positive
    peaks = eigenvectors[np.argmax(np.abs(eigenvectors), axis=0), np.arange(r)]
    eigenvectors = eigenvectors * np.sign(peaks)

    loadings = np.sqrt(n) * eigenvectors
    factors = X.T @ loadings / n
    return loadings, factors


def ic1_penalty(k: int, n: int, t: int) -> float:
    return k * ((n + t) / (n * t)) * np.log(n * t / (n + t))


def information_criterion(X: np.ndarray, r_max: int) -> np.ndarray:
    """IC_1(k) = ln V(k) + k (N+T)/(NT) ln(NT/(N+T)) for k = 1..r_max."""
    X = np.asarray(X, dtype=float)
    n, t = X.shape
    if not 1 <= r_max <= min(n, t) / 2:
        raise ValueError(f"r_max must lie in [1, min(N, T)/2] = [1, {min(n, t) / 2}], got {r_max}")
    s_x = _sample_cov(X)
    eigenvalues = np.sort(linalg.eigvalsh(s_x))[::-1]
    total = np.trace(s_x)
    # mean squared residual after k principal components
    residual = (total - np.cumsum(eigenvalues[:r_max])) / n
    ks = np.arange(1, r_max + 1)
    return np.log(np.maximum(residual, np.finfo(float).tiny)) + np.array([ic1_penalty(k, n, t) for k in ks])


def select_num_factors(X: np.ndarray, r_max: int) -> int:
    curve = information_criterion(X, r_max)
    # argmin returns the first minimum: ties go to the smaller k
    r_star = int(np.argmin(curve)) + 1
    logger.info("IC_1 selects %d factors (r_max=%d)", r_star, r_max)
    return r_star


def project_out_observed(X: np.ndarray, G: np.ndarray) -> np.ndarray:
    """X M with M = I_T - G (G'G)^{-1} G'."""
    X = np.asarray(X, dtype=float)
    G = np.asarray(G, dtype=float).reshape(X.shape[1], -1)
    if G.shape[1] == 0:
        return X.copy()
    if G.shape[0] <= G.shape[1]:
        raise SingularGram(f"Need T > r2, got T={G.shape[0]}, r2={G.shape[1]}")
    gram = G.T @ G
    if not is_well_conditioned(gram):
        raise SingularGram("G'G is not invertible; observed factors are collinear")
    return X - linalg.solve(gram, (X @ G).T, assume_a="pos").T @ G.T


def observed_loadings(X: np.ndarray, lambda_f: np.ndarray, factors_f: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Lambda^g = (X - Lambda^f F') G (G'G)^{-1}."""
    n = X.shape[0]
    G = np.asarray(G, dtype=float).reshape(X.shape[1], -1)
    if G.shape[1] == 0:
        return np.zeros((n, 0))
    residual = X - lambda_f @ factors_f.T
    return linalg.solve(G.T @ G, (residual @ G).T, assume_a="pos").T


def _seed_state(x_dot: np.ndarray, r1: int, method: SeedMethod, seed: int) -> EstimationState:
    s_x = _sample_cov(x_dot)
    eigenvalues, _ = _top_eigen(s_x, r1)
    if method == SeedMethod.PCA:
        loadings, factors = pca_factors(x_dot, r1)
        # rescale to unit-variance factors, the Sigma_H = I convention of the likelihood
        lambda_0 = loadings * np.sqrt(np.diag(factors.T @ factors) / factors.shape[0])
        phi_0 = np.diag(s_x) - np.sum(lambda_0 ** 2, axis=1)
    else:
        rng = np.random.default_rng(seed)
        basis, _ = linalg.qr(rng.standard_normal((x_dot.shape[0], r1)), mode="economic")
        lambda_0 = basis * np.sqrt(np.maximum(eigenvalues, VARIANCE_FLOOR))
        phi_0 = 0.5 * np.diag(s_x)
    phi_0 = np.maximum(phi_0, VARIANCE_FLOOR)
    return EstimationState(LoadingsMatrix(lambda_0, np.zeros((x_dot.shape[0], 0))), phi_0)


def init_unpenalized(
        X: np.ndarray,
        G: np.ndarray,
        r1: int,
        max_iter: int,
        tol: float,
        c: float = DEFAULT_C,
        seed_method: SeedMethod = SeedMethod.PCA,
        seed: int = 0,
) -> InitState:
    """
    Unpenalized MM-EM on the projected data X M, seeded by PCA (or a random
    orthonormal basis), followed by the regression for the observed-factor loadings.
    """
    if r1 < 1:
        raise ValueError(f"r1 must be at least 1, got {r1}")
    X = np.asarray(X, dtype=float)
    G = np.asarray(G, dtype=float).reshape(X.shape[1], -1)
    x_dot = project_out_observed(X, G)

    options = FitOptions(c=c, tol=tol, max_iter=max_iter, seed_method=seed_method, seed=seed)
    initial = _seed_state(x_dot, r1, SeedMethod(seed_method), seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        state, _, _, converged = run_mm_em(_sample_cov(x_dot), initial, PenaltyPair(0.0, 0.0), options)
    if not converged:
        message = f"Unpenalized initialization did not converge in {max_iter} sweeps; last iterate used"
        logger.warning(message)
        warnings.warn(message, ConvergenceWarning, stacklevel=2)

    lambda_f = state.loadings.latent
    factors_f = gls_factors(lambda_f, state.phi_e, x_dot)
    return InitState(
        lambda_f=lambda_f,
        factors_f=factors_f,
        phi_e=state.phi_e,
        lambda_g=observed_loadings(X, lambda_f, factors_f, G),
        iterations=state.iteration,
        converged=converged,
    )
