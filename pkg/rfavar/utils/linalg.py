import numpy as np
from scipy import linalg


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2


def companion_matrix(phi: list[np.ndarray]) -> np.ndarray:
    """Stack a VAR(p) into its rp x rp first-order form."""
    p = len(phi)
    r = phi[0].shape[0]
    companion = np.zeros((r * p, r * p))
    companion[:r, :] = np.hstack(phi)
    if p > 1:
        companion[r:, :-r] = np.eye(r * (p - 1))
    return companion


def spectral_radius(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(linalg.eigvals(matrix))))


def lift_eigenvalues(matrix: np.ndarray, floor: float) -> tuple[np.ndarray, bool]:
    """Raise eigenvalues below ``floor`` to ``floor``; reports whether anything moved."""
    eigenvalues, eigenvectors = linalg.eigh(symmetrize(matrix))
    if eigenvalues.min() >= floor:
        return matrix, False
    lifted = (eigenvectors * np.maximum(eigenvalues, floor)) @ eigenvectors.T
    return symmetrize(lifted), True


def is_well_conditioned(matrix: np.ndarray, max_condition: float = 1e12) -> bool:
    if matrix.size == 0:
        return True
    with np.errstate(all="ignore"):
        condition = np.linalg.cond(matrix)
    return bool(np.isfinite(condition) and condition < max_condition)
