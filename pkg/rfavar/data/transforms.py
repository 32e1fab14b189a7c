import numpy as np

from rfavar.errors import NonPositiveForLog, SeriesTooShort, UnknownTransformCode, ZeroVarianceSeries
from rfavar.models.transform_code import TransformCode


def apply_transform(raw: np.ndarray, code: int) -> np.ndarray:
    """
    Apply a stationarity transform by code:
        1 level, 2 first difference, 3 second difference,
        4 log, 5 first difference of log, 6 second difference of log.
    The output is shorter than the input by the differencing order.
    """
    try:
        transform = TransformCode(int(code))
    except ValueError:
        raise UnknownTransformCode(f"Unknown transform code {code}; expected one of 1..6") from None

    values = np.asarray(raw, dtype=float).ravel()
    if values.size < 1 + transform.diff_order:
        raise SeriesTooShort(f"Code {int(transform)} needs at least {1 + transform.diff_order} values, got {values.size}")

    if transform.uses_log:
        if np.any(values <= 0):
            raise NonPositiveForLog(f"Code {int(transform)} takes a log but the series has values <= 0")
        values = np.log(values)

    if transform.diff_order:
        return np.diff(values, n=transform.diff_order)
    return values.copy()


def standardize(values: np.ndarray, ids: list[str] | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise zero mean, unit sample variance (divisor T-1). Returns (panel, means, stds)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    n, t = values.shape
    if t < 2:
        raise SeriesTooShort(f"Standardization needs at least 2 periods, got {t}")
    ids = ids if ids is not None else [f"row{i}" for i in range(n)]

    # two passes: mean first, then squared deviations around it
    means = values.mean(axis=1)
    centered = values - means[:, None]
    stds = np.sqrt(np.einsum("ij,ij->i", centered, centered) / (t - 1))

    for i in range(n):
        if not np.isfinite(stds[i]) or stds[i] <= 1e-14 * max(1.0, abs(means[i])):
            raise ZeroVarianceSeries(ids[i])

    return centered / stds[:, None], means, stds
