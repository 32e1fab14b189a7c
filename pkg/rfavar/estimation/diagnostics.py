import numpy as np

from rfavar.models.covariance import ThresholdedCov
from rfavar.models.loadings import LoadingsMatrix


def factor_r2(X: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """R^2 of univariate regressions of each series on each factor (N x r), used to name factors."""
    X = np.asarray(X, dtype=float)
    factors = np.asarray(factors, dtype=float)
    x_centered = X - X.mean(axis=1, keepdims=True)
    f_centered = factors - factors.mean(axis=0)
    cross = x_centered @ f_centered
    x_ss = np.einsum("ij,ij->i", x_centered, x_centered)
    f_ss = np.einsum("ij,ij->j", f_centered, f_centered)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = cross ** 2 / np.outer(x_ss, f_ss)
    return np.nan_to_num(r2)


def sparsity_summary(loadings: LoadingsMatrix, idio: ThresholdedCov | None = None) -> dict:
    """L_N (largest non-zero count over loading columns) and the realized S_N."""
    nonzeros = loadings.column_nonzeros()
    summary = {
        "l_n": int(nonzeros.max()) if nonzeros.size else 0,
        "nonzeros_per_column": nonzeros.tolist(),
        "zero_fraction_per_column": (1.0 - nonzeros / loadings.n_series).tolist(),
        "kappa": loadings.nonzero_count,
    }
    if idio is not None:
        summary["s_n"] = idio.nonzeros_per_row_max
    return summary
