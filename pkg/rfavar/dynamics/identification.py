"""
Identification schemes for the factor VAR.

IRa leaves the latent loadings unrotated and removes the latent/observed
innovation covariance. IRb ("named factors") additionally maps a chosen
r1 x r1 block of latent loadings to the identity. Both rotate
h* = A h, Lambda^ = Lambda~ A^-1 and Phi^_i = A Phi~_i A^-1, so the common
component and the VAR predictions are unchanged.
"""
import logging
import warnings

import numpy as np
from scipy import linalg

from rfavar.errors import DimensionMismatch, IdentificationWarning, SingularNamingBlock, SingularOmegaGg
from rfavar.models.fit import RfavarFit
from rfavar.models.identification import IdentificationReport, IdentifiedModel, RotationPair
from rfavar.models.loadings import LoadingsMatrix
from rfavar.models.scheme import Scheme
from rfavar.models.var import VarModel
from rfavar.utils.linalg import is_well_conditioned, symmetrize

logger = logging.getLogger(__name__)

BLOCK_TOLERANCE = 1e-10


def _projection(omega: np.ndarray, r1: int) -> np.ndarray:
    """Omega_fg Omega_gg^-1, an r1 x r2 matrix."""
    omega_gg = omega[r1:, r1:]
    if omega_gg.size == 0:
        return np.zeros((r1, 0))
    if not is_well_conditioned(omega_gg):
        raise SingularOmegaGg("Omega_gg is not invertible")
    return linalg.solve(omega_gg, omega[r1:, :r1], assume_a="sym").T


def _block_rotation(top_left: np.ndarray, top_left_inv: np.ndarray, b: np.ndarray, scheme: Scheme) -> RotationPair:
    r1, r2 = b.shape
    a = np.eye(r1 + r2)
    a_inv = np.eye(r1 + r2)
    a[:r1, :r1] = top_left
    a[:r1, r1:] = -top_left @ b
    a_inv[:r1, :r1] = top_left_inv
    a_inv[:r1, r1:] = b
    return RotationPair(a, a_inv, scheme)


def rotation_ira(omega: np.ndarray, r1: int, r2: int) -> RotationPair:
    """A = [[I, -Omega_fg Omega_gg^-1], [0, I]] and its inverse."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (r1 + r2, r1 + r2):
        raise DimensionMismatch(f"Omega must be {r1 + r2} x {r1 + r2}, got {omega.shape}")
    return _block_rotation(np.eye(r1), np.eye(r1), _projection(omega, r1), Scheme.IRA)


def rotation_irb(omega: np.ndarray, r1: int, r2: int, lambda_1: np.ndarray) -> RotationPair:
    """A = [[Lambda_1, -Lambda_1 Omega_fg Omega_gg^-1], [0, I]] and its inverse."""
    omega = np.asarray(omega, dtype=float)
    lambda_1 = np.asarray(lambda_1, dtype=float)
    if omega.shape != (r1 + r2, r1 + r2):
        raise DimensionMismatch(f"Omega must be {r1 + r2} x {r1 + r2}, got {omega.shape}")
    if lambda_1.shape != (r1, r1):
        raise DimensionMismatch(f"Naming block must be {r1} x {r1}, got {lambda_1.shape}")
    with np.errstate(all="ignore"):
        condition = float(np.linalg.cond(lambda_1))
    if not np.isfinite(condition) or condition >= 1e12:
        raise SingularNamingBlock(condition)
    return _block_rotation(lambda_1, linalg.inv(lambda_1), _projection(omega, r1), Scheme.IRB)


def structural_cov(omega: np.ndarray, scheme: Scheme, r1: int, lambda_1: np.ndarray | None = None) -> np.ndarray:
    """IRa: blockdiag(Omega_f.g, Omega_gg); IRb: blockdiag(Lambda_1 Omega_f.g Lambda_1', Omega_gg)."""
    omega = np.asarray(omega, dtype=float)
    b = _projection(omega, r1)
    omega_fg = omega[:r1, :r1] - b @ omega[r1:, :r1]
    if Scheme(scheme) == Scheme.IRB:
        if lambda_1 is None:
            raise ValueError("IRb needs the naming block lambda_1")
        omega_fg = lambda_1 @ omega_fg @ lambda_1.T
    result = np.zeros_like(omega)
    result[:r1, :r1] = symmetrize(omega_fg)
    result[r1:, r1:] = omega[r1:, r1:]
    return result


def _force_block_diagonal(omega_star: np.ndarray, r1: int) -> np.ndarray:
    cross = omega_star[:r1, r1:]
    if cross.size:
        scale = max(1.0, float(np.max(np.abs(omega_star))))
        worst = float(np.max(np.abs(cross)))
        if worst > BLOCK_TOLERANCE * scale:
            message = f"Structural latent/observed covariance block is {worst:.3e}, above tolerance; set to zero"
            logger.warning(message)
            warnings.warn(message, IdentificationWarning, stacklevel=3)
    forced = symmetrize(omega_star)
    forced[:r1, r1:] = 0.0
    forced[r1:, :r1] = 0.0
    return forced


def sparsity_order(lambda_f: np.ndarray) -> list[int]:
    """Latent columns by descending count of exact zeros, ties by descending column norm."""
    zeros = np.sum(lambda_f == 0.0, axis=0)
    norms = np.linalg.norm(lambda_f, axis=0)
    return sorted(range(lambda_f.shape[1]), key=lambda k: (-zeros[k], -norms[k], k))


def factor_signs(lambda_f: np.ndarray, factors_f: np.ndarray, X: np.ndarray | None = None) -> np.ndarray:
    """
    +1/-1 per latent column so that each factor moves with the series carrying
    its largest absolute loading: by sample correlation when X is given, by the
    sign of that loading otherwise.
    """
    signs = np.ones(lambda_f.shape[1])
    for k in range(lambda_f.shape[1]):
        anchor = int(np.argmax(np.abs(lambda_f[:, k])))
        if X is not None:
            direction = np.corrcoef(factors_f[:, k], X[anchor])[0, 1]
        else:
            direction = lambda_f[anchor, k]
        if np.isfinite(direction) and direction < 0:
            signs[k] = -1.0
    return signs


def _relabel(fit: RfavarFit, var: VarModel, order: list[int], signs: np.ndarray) -> tuple[np.ndarray, np.ndarray, VarModel]:
    r1, r = fit.r1, var.n_vars
    d = np.eye(r)
    d[:r1, :r1] = np.eye(r1)[order] * signs[:, None]
    lambda_f = fit.loadings.latent[:, order] * signs
    factors_f = fit.factors_f[:, order] * signs
    # d is a signed permutation, so its inverse is its transpose
    return lambda_f, factors_f, var.transformed(d, d.T)


def _identified(
        lambda_f: np.ndarray,
        lambda_g: np.ndarray,
        factors_f: np.ndarray,
        G: np.ndarray,
        var: VarModel,
        rotation: RotationPair,
        order: list[int],
        signs: np.ndarray,
        naming_rows: list[int],
) -> IdentifiedModel:
    r1 = lambda_f.shape[1]
    full_hat = np.hstack([lambda_f, lambda_g]) @ rotation.a_inv
    h_hat = np.hstack([factors_f, G]) @ rotation.a.T
    var_hat = var.transformed(rotation.a, rotation.a_inv)
    omega_star = _force_block_diagonal(var_hat.omega, r1)
    var_hat.omega = omega_star
    return IdentifiedModel(
        loadings_hat=LoadingsMatrix.from_full(full_hat, r1),
        factors_hat=h_hat[:, :r1],
        var_hat=var_hat,
        omega_star=omega_star,
        scheme=rotation.scheme,
        column_order=list(order),
        signs=signs,
        rotation=rotation,
        naming_rows=list(naming_rows),
    )


def apply_ira(fit: RfavarFit, G: np.ndarray, var: VarModel, X: np.ndarray | None = None) -> IdentifiedModel:
    """
    Order latent columns by sparsity and fix their signs, then rotate so that the
    structural latent and observed innovations are uncorrelated.
    """
    G = np.asarray(G, dtype=float).reshape(fit.factors_f.shape[0], -1)
    if var.n_vars != fit.r1 + fit.r2:
        raise DimensionMismatch(f"VAR has {var.n_vars} variables, fit has r1 + r2 = {fit.r1 + fit.r2}")
    order = sparsity_order(fit.loadings.latent)
    signs = factor_signs(fit.loadings.latent[:, order], fit.factors_f[:, order], X)
    lambda_f, factors_f, var_relabeled = _relabel(fit, var, order, signs)

    rotation = rotation_ira(var_relabeled.omega, fit.r1, fit.r2)
    logger.debug("IRa: column order %s, signs %s", order, signs.tolist())
    return _identified(lambda_f, fit.loadings.observed, factors_f, G, var_relabeled, rotation, order, signs, [])


def apply_irb(fit: RfavarFit, G: np.ndarray, var: VarModel, naming_rows: list[int]) -> IdentifiedModel:
    """Named-factor rotation: the naming_rows block of the latent loadings becomes I_r1."""
    G = np.asarray(G, dtype=float).reshape(fit.factors_f.shape[0], -1)
    naming_rows = [int(row) for row in naming_rows]
    if len(naming_rows) != fit.r1:
        raise DimensionMismatch(f"IRb needs r1 = {fit.r1} naming rows, got {len(naming_rows)}")
    if len(set(naming_rows)) != len(naming_rows):
        raise DimensionMismatch(f"Naming rows must be distinct, got {naming_rows}")
    if var.n_vars != fit.r1 + fit.r2:
        raise DimensionMismatch(f"VAR has {var.n_vars} variables, fit has r1 + r2 = {fit.r1 + fit.r2}")

    lambda_1 = fit.loadings.latent[naming_rows]
    rotation = rotation_irb(var.omega, fit.r1, fit.r2, lambda_1)
    order = list(range(fit.r1))
    signs = np.ones(fit.r1)
    return _identified(fit.loadings.latent, fit.loadings.observed, fit.factors_f, G, var, rotation, order, signs,
                       naming_rows)


def identify(
        fit: RfavarFit,
        G: np.ndarray,
        var: VarModel,
        scheme: Scheme,
        naming_rows: list[int] | tuple[int, ...] = (),
        X: np.ndarray | None = None,
) -> IdentifiedModel:
    if Scheme(scheme) == Scheme.IRB:
        return apply_irb(fit, G, var, list(naming_rows))
    return apply_ira(fit, G, var, X)


def identification_diagnostic(loadings: LoadingsMatrix, r1: int, r2: int) -> IdentificationReport:
    """
    Restriction count: r1^2 + r1 r2 are needed; exact zeros of the latent block plus
    the normalizations (unit latent covariance, zero latent/observed covariance) are available.
    A latent block without a single exact zero always warns, whatever the count.
    """
    zero_restrictions = int(np.sum(loadings.latent == 0.0))
    normalization = r1 * (r1 + 1) // 2 + r1 * r2
    required = r1 * r1 + r1 * r2
    report = IdentificationReport(
        required=required,
        zero_restrictions=zero_restrictions,
        normalization_restrictions=normalization,
        passed=zero_restrictions > 0 and zero_restrictions + normalization >= required,
    )
    if zero_restrictions == 0:
        logger.warning("Latent loadings are fully dense; no zero restriction identifies the factors")
    elif not report.passed:
        logger.warning("Only %d of %d identifying restrictions available", report.available, required)
    return report
