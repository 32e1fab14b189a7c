import logging
from dataclasses import replace

import numpy as np

from rfavar.errors import BadScale, BadShockIndex, CodeLengthMismatch
from rfavar.dynamics.var_dynamics import check_stability, ma_coefficients
from rfavar.models.identification import IdentifiedModel
from rfavar.models.irf import IrfResult
from rfavar.models.transform_code import TransformCode

logger = logging.getLogger(__name__)


def resolve_shock_index(shock_index: int, r: int) -> int:
    """Negative indices count from the end, so -1 is the last observed factor."""
    if not -r <= shock_index < r:
        raise BadShockIndex(f"Shock index {shock_index} outside the {r} structural innovations")
    return shock_index % r


def _factor_paths(model: IdentifiedModel, h_max: int, shock_index: int, shock_size: float) -> np.ndarray:
    """Psi^_h e * size for h = 0..h_max, responses of the rotated factors h*."""
    var = model.var_hat
    index = resolve_shock_index(shock_index, var.n_vars)
    stable, radius = check_stability(var)
    if not stable:
        logger.warning("Impulse responses from a non-stable VAR (companion radius %.4f)", radius)
    psi = ma_coefficients(var, h_max).psi
    return np.array([psi_h[:, index] for psi_h in psi]) * shock_size


def irf_factors(model: IdentifiedModel, h_max: int, shock_index: int, shock_size: float = 1.0) -> np.ndarray:
    """
    Responses of the composite factors [F~ G]: A^-1 Psi^_h e * size.
    Horizon 0 is the shock_index column of A^-1.
    """
    return _factor_paths(model, h_max, shock_index, shock_size) @ model.impact_factors.T


def irf_observables(model: IdentifiedModel, h_max: int, shock_index: int, shock_size: float = 1.0) -> np.ndarray:
    """Lambda^ Psi^_h e * size; horizon 0 is the shock_index column of B_0 = Lambda^."""
    return _factor_paths(model, h_max, shock_index, shock_size) @ model.impact_observables.T


def impulse_responses(model: IdentifiedModel, h_max: int, shock_index: int, shock_size: float = 1.0) -> IrfResult:
    paths = _factor_paths(model, h_max, shock_index, shock_size)
    return IrfResult(
        factor_irf=paths @ model.impact_factors.T,
        observable_irf=paths @ model.impact_observables.T,
        shock_index=resolve_shock_index(shock_index, model.var_hat.n_vars),
        shock_size_standardized=float(shock_size),
    )


def accumulation_orders(codes: list[int]) -> np.ndarray:
    return np.array([TransformCode(code).diff_order for code in codes], dtype=int)


def accumulate_paths(paths: np.ndarray, orders: np.ndarray) -> np.ndarray:
    """Running sums along the horizon axis (axis -2), once per difference order of each series."""
    out = np.array(paths, dtype=float, copy=True)
    for order in (1, 2):
        columns = orders >= order
        out[..., columns] = np.cumsum(out[..., columns], axis=-2)
    return out


def accumulate_by_code(irf: IrfResult, codes: list[int]) -> IrfResult:
    """
    Levels responses for differenced series: one running sum for codes 2 and 5,
    two for codes 3 and 6. Series already accumulated are left alone. Bands are
    summed bound by bound; bootstrap_irf accumulates per draw when given codes.
    """
    n = irf.observable_irf.shape[1]
    if len(codes) != n:
        raise CodeLengthMismatch(f"Got {len(codes)} transform codes for {n} series")
    orders = accumulation_orders(codes) * ~irf.accumulated
    touched = orders > 0

    return replace(
        irf,
        observable_irf=accumulate_paths(irf.observable_irf, orders),
        ci_lower=None if irf.ci_lower is None else accumulate_paths(irf.ci_lower, orders),
        ci_upper=None if irf.ci_upper is None else accumulate_paths(irf.ci_upper, orders),
        accumulated=irf.accumulated | touched,
    )


def rescale_to_original_units(
        irf: IrfResult,
        target_series_std: float,
        shock_magnitude_units: float,
        series_stds: np.ndarray | None = None,
) -> IrfResult:
    """
    Scale the whole system by magnitude / std so the structural shock equals
    ``shock_magnitude_units`` of the shocked series in its original units.
    With ``series_stds`` every observable response is also returned in its own units.
    """
    if not np.isfinite(target_series_std) or target_series_std <= 0:
        raise BadScale(f"Target series std must be positive and finite, got {target_series_std}")
    if not np.isfinite(shock_magnitude_units):
        raise BadScale(f"Shock magnitude must be finite, got {shock_magnitude_units}")
    factor = shock_magnitude_units / target_series_std

    column_scale = np.ones(irf.observable_irf.shape[1])
    if series_stds is not None:
        series_stds = np.asarray(series_stds, dtype=float)
        if series_stds.shape != column_scale.shape:
            raise BadScale(f"Expected {column_scale.size} series stds, got {series_stds.size}")
        if np.any(series_stds <= 0) or not np.all(np.isfinite(series_stds)):
            raise BadScale("Series stds must be positive and finite")
        column_scale = series_stds

    def scaled(values, per_series):
        if values is None:
            return None
        return values * factor * (column_scale if per_series else 1.0)

    # a negative shock flips which bound is lower
    flip = factor < 0
    factor_lower, factor_upper = scaled(irf.factor_lower, False), scaled(irf.factor_upper, False)
    ci_lower, ci_upper = scaled(irf.ci_lower, True), scaled(irf.ci_upper, True)
    return replace(
        irf,
        factor_irf=scaled(irf.factor_irf, False),
        observable_irf=scaled(irf.observable_irf, True),
        factor_lower=factor_upper if flip else factor_lower,
        factor_upper=factor_lower if flip else factor_upper,
        ci_lower=ci_upper if flip else ci_lower,
        ci_upper=ci_lower if flip else ci_upper,
        shock_size_standardized=irf.shock_size_standardized * factor,
    )
