import logging

import numpy as np
from scipy import linalg

from rfavar.errors import InsufficientObservations, MissingValues, SingularRegressors
from rfavar.models.var import MaCoefficients, VarModel
from rfavar.utils.linalg import companion_matrix, spectral_radius, symmetrize

logger = logging.getLogger(__name__)


def lagged_regressors(H: np.ndarray, p: int, intercept: bool = True) -> np.ndarray:
    """Rows t = p..T-1 of [h_{t-1}, ..., h_{t-p}, (1)]."""
    t = H.shape[0]
    blocks = [H[p - lag:t - lag] for lag in range(1, p + 1)]
    if intercept:
        blocks.append(np.ones((t - p, 1)))
    return np.hstack(blocks)


def fit_var(H: np.ndarray, p: int, intercept: bool = True) -> VarModel:
    """
    Multivariate least squares of h_t on p lags (plus a constant), solved through
    a QR factorization of the regressor block.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim == 1:
        H = H[:, None]
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    t, r = H.shape
    if t - p <= r * p + 1:
        raise InsufficientObservations(f"VAR({p}) on {r} variables needs T - p > {r * p + 1}, got T={t}")
    if not np.all(np.isfinite(H)):
        raise MissingValues("VAR input contains non-finite values")

    Z = lagged_regressors(H, p, intercept)
    Y = H[p:]
    q, rr = linalg.qr(Z, mode="economic")
    diag = np.abs(np.diag(rr))
    if diag.min() <= diag.max() * max(Z.shape) * np.finfo(float).eps:
        raise SingularRegressors(f"Lagged regressor matrix of VAR({p}) is rank deficient")
    coef = linalg.solve_triangular(rr, q.T @ Y)

    phi = [coef[(lag - 1) * r:lag * r].T.copy() for lag in range(1, p + 1)]
    residuals = Y - Z @ coef
    omega = symmetrize(residuals.T @ residuals / (t - p))
    radius = spectral_radius(companion_matrix(phi))
    if radius >= 1.0:
        logger.warning("Estimated VAR(%d) is not stable: companion radius %.4f", p, radius)
    return VarModel(
        p=p,
        phi=phi,
        omega=omega,
        residuals=residuals,
        companion_radius=radius,
        intercept=coef[-1].copy() if intercept else None,
        initial_values=H[:p].copy(),
    )


def ma_coefficients(model: VarModel, h_max: int) -> MaCoefficients:
    """Psi_0 = I, Psi_h = sum_{j=1..min(h,p)} Phi_j Psi_{h-j}."""
    if h_max < 0:
        raise ValueError(f"h_max must be nonnegative, got {h_max}")
    r = model.phi[0].shape[0]
    psi = [np.eye(r)]
    for h in range(1, h_max + 1):
        psi_h = np.zeros((r, r))
        for j in range(1, min(h, model.p) + 1):
            psi_h += model.phi[j - 1] @ psi[h - j]
        psi.append(psi_h)
    return MaCoefficients(psi)


def check_stability(model: VarModel) -> tuple[bool, float]:
    radius = spectral_radius(companion_matrix(model.phi))
    return radius < 1.0, radius


def simulate_path(model: VarModel, innovations: np.ndarray, initial_values: np.ndarray) -> np.ndarray:
    """Rebuild h_t recursively from p starting rows and T - p innovations."""
    p = model.p
    n_new, r = innovations.shape
    path = np.empty((p + n_new, r))
    path[:p] = initial_values
    constant = model.intercept if model.intercept is not None else np.zeros(r)
    for t in range(p, p + n_new):
        value = constant + innovations[t - p]
        for j in range(1, p + 1):
            value = value + model.phi[j - 1] @ path[t - j]
        path[t] = value
    return path
