import logging

import numpy as np

from rfavar._constants import VARIANCE_FLOOR
from rfavar.errors import DimensionMismatch
from rfavar.estimation.mm_em import soft_threshold
from rfavar.models.covariance import ThresholdedCov
from rfavar.models.loadings import LoadingsMatrix
from rfavar.utils.linalg import lift_eigenvalues

logger = logging.getLogger(__name__)


def poet_tau(n: int, t_periods: int) -> float:
    """tau = 1/sqrt(N) + sqrt(log N / T), natural log."""
    return 1.0 / np.sqrt(n) + np.sqrt(np.log(n) / t_periods)


def residual_cov(X: np.ndarray, loadings: LoadingsMatrix | np.ndarray, factors: np.ndarray) -> np.ndarray:
    """S_e = (1/T) sum_t (x_t - Lambda h_t)(x_t - Lambda h_t)'."""
    X = np.asarray(X, dtype=float)
    lam = loadings.full if isinstance(loadings, LoadingsMatrix) else np.atleast_2d(np.asarray(loadings, dtype=float))
    factors = np.asarray(factors, dtype=float).reshape(X.shape[1], -1) if np.size(factors) else np.zeros((X.shape[1], 0))
    if lam.shape[0] != X.shape[0] or factors.shape[0] != X.shape[1] or lam.shape[1] != factors.shape[1]:
        raise DimensionMismatch(
            f"X is {X.shape}, loadings {lam.shape}, factors {factors.shape}; expected N x T, N x r, T x r"
        )
    residuals = X - lam @ factors.T
    return residuals @ residuals.T / X.shape[1]


def poet_threshold(
        s_e: np.ndarray,
        n: int,
        t_periods: int,
        repair: bool = True,
        tau: float | None = None,
) -> ThresholdedCov:
    """Soft-threshold the off-diagonal entries of S_e at tau; the diagonal is kept."""
    s_e = np.asarray(s_e, dtype=float)
    tau = poet_tau(n, t_periods) if tau is None else float(tau)

    upper = np.triu_indices_from(s_e, k=1)
    thresholded = np.diag(np.diag(s_e)).astype(float)
    thresholded[upper] = soft_threshold(s_e[upper], tau)
    # mirror the upper triangle so symmetry is exact
    thresholded[upper[1], upper[0]] = thresholded[upper]

    repaired = False
    if repair:
        thresholded, repaired = lift_eigenvalues(thresholded, VARIANCE_FLOOR)
        if repaired:
            logger.info("Thresholded covariance lifted to minimum eigenvalue %.0e", VARIANCE_FLOOR)

    return ThresholdedCov(
        matrix=thresholded,
        tau=tau,
        nonzeros_per_row_max=int(np.max(np.count_nonzero(thresholded, axis=1))) if thresholded.size else 0,
        pd_repaired=repaired,
    )
