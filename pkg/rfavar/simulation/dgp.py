"""
Synthetic FAVAR panels with known truth.

X = Lambda^f F' + Lambda^g G' + e, where h_t = (f_t', g_t')' follows a stable VAR(p),
loadings are sparse with column norm^2 = N^beta, and Sigma_e is banded.
"""
import logging

import numpy as np
from scipy import linalg

from rfavar._constants import BURN_IN, DGP_EIGEN_FLOOR, DGP_MAX_RADIUS
from rfavar.errors import UnstableVar
from rfavar.models.dgp import DgpConfig, DgpTruth
from rfavar.models.loadings import LoadingsMatrix
from rfavar.utils.linalg import companion_matrix, lift_eigenvalues, spectral_radius, symmetrize

logger = logging.getLogger(__name__)

MAX_OMEGA_CONDITION = 50.0


def replication_rng(seed: int, *indices: int) -> np.random.Generator:
    """Independent stream for (seed, index, ...); the same tuple always yields the same stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(i) for i in indices]]))


def draw_stable_var(r: int, p: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random VAR(p) coefficients whose companion spectral radius is below 0.95."""
    if r < 1 or p < 1:
        raise ValueError(f"r and p must be at least 1, got r={r}, p={p}")
    phi = [rng.normal(0.0, 0.5 / np.sqrt(r * p), size=(r, r)) for _ in range(p)]
    radius = spectral_radius(companion_matrix(phi))
    while radius >= DGP_MAX_RADIUS:
        # Phi_i -> s^i Phi_i scales every companion eigenvalue by s
        scale = 0.9 * DGP_MAX_RADIUS / radius
        phi = [phi_i * scale ** (i + 1) for i, phi_i in enumerate(phi)]
        radius = spectral_radius(companion_matrix(phi))
    return phi


def draw_innovation_cov(r: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = linalg.qr(rng.normal(size=(r, r)))
    eigenvalues = rng.uniform(1.0, MAX_OMEGA_CONDITION ** 0.5, size=r)
    return symmetrize((q * eigenvalues) @ q.T)


def stationary_factor_cov(phi: list[np.ndarray], omega: np.ndarray) -> np.ndarray:
    """Sigma_H from the companion-form discrete Lyapunov equation."""
    r = omega.shape[0]
    companion = companion_matrix(phi)
    if spectral_radius(companion) >= 1.0:
        raise UnstableVar(f"Companion spectral radius {spectral_radius(companion):.4f} >= 1")
    q = np.zeros_like(companion)
    q[:r, :r] = omega
    return symmetrize(linalg.solve_discrete_lyapunov(companion, q)[:r, :r])


def draw_loadings(config: DgpConfig, rng: np.random.Generator) -> np.ndarray:
    n, r = config.n_series, config.r
    loadings = np.zeros((n, r))
    target_norm = np.sqrt(float(n) ** config.beta)
    for j in range(r):
        column = rng.uniform(0.5, 1.5, size=n) * rng.choice([-1.0, 1.0], size=n)
        column[rng.choice(n, size=config.zeros_per_column, replace=False)] = 0.0
        loadings[:, j] = column * (target_norm / np.linalg.norm(column))
    return loadings


def banded_idio_cov(config: DgpConfig) -> np.ndarray:
    """idio_rho^|i-j| inside the band (at most idio_band nonzeros per row), repaired to PD."""
    n = config.n_series
    half_width = (config.idio_band - 1) // 2
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    band = np.where(lags <= half_width, config.idio_rho ** lags, 0.0)
    band, repaired = lift_eigenvalues(band, DGP_EIGEN_FLOOR)
    if repaired:
        logger.debug("Sigma_e band lifted to minimum eigenvalue %.0e", DGP_EIGEN_FLOOR)
    return config.idio_scale * band


def simulate(config: DgpConfig) -> DgpTruth:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, t, r, p = config.n_series, config.n_periods, config.r, config.p

    phi = draw_stable_var(r, p, rng)
    omega = draw_innovation_cov(r, rng)
    if config.unit_factor_variance:
        # similarity transform h -> C h with C Sigma_H C' = I; companion spectrum unchanged
        chol = linalg.cholesky(stationary_factor_cov(phi, omega), lower=True)
        chol_inv = linalg.solve_triangular(chol, np.eye(r), lower=True)
        phi = [chol_inv @ phi_i @ chol for phi_i in phi]
        omega = symmetrize(chol_inv @ omega @ chol_inv.T)

    loadings = np.zeros((n, r)) if config.zero_loadings else draw_loadings(config, rng)
    sigma_e = banded_idio_cov(config)

    innovations = rng.standard_normal((BURN_IN + t, r)) @ linalg.cholesky(omega, lower=True).T
    path = np.zeros((BURN_IN + t, r))
    for step in range(BURN_IN + t):
        path[step] = innovations[step]
        for lag in range(1, min(p, step) + 1):
            path[step] += phi[lag - 1] @ path[step - lag]
    h = path[BURN_IN:]
    f, g = h[:, :config.r1].copy(), h[:, config.r1:].copy()

    if config.orthogonalize and config.r2 and config.r1:
        f = f - g @ linalg.solve(g.T @ g, g.T @ f, assume_a="pos")

    e = linalg.cholesky(sigma_e, lower=True) @ rng.standard_normal((n, t))
    x = loadings[:, :config.r1] @ f.T + loadings[:, config.r1:] @ g.T + e

    logger.debug("Simulated N=%d, T=%d, r1=%d, r2=%d, p=%d (seed %d)", n, t, config.r1, config.r2, p, config.seed)
    return DgpTruth(
        X=x,
        F=f,
        G=g,
        loadings=LoadingsMatrix.from_full(loadings, config.r1),
        sigma_e=sigma_e,
        phi=phi,
        omega=omega,
        config=config,
    )


def population_covariance(truth: DgpTruth) -> np.ndarray:
    """Lambda Sigma_H Lambda' + Sigma_e with Sigma_H implied by (Phi, Omega)."""
    sigma_h = stationary_factor_cov(truth.phi, truth.omega)
    full = truth.loadings.full
    return symmetrize(full @ sigma_h @ full.T + truth.sigma_e)
