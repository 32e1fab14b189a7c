from dataclasses import dataclass

import numpy as np


@dataclass
class ThresholdedCov:
    """POET estimate of Sigma_e. Diagonal equals the input unless pd_repaired."""
    matrix: np.ndarray
    tau: float
    nonzeros_per_row_max: int
    pd_repaired: bool = False

    @property
    def zero_fraction(self) -> float:
        n = self.matrix.shape[0]
        if n < 2:
            return 0.0
        off_diagonal = ~np.eye(n, dtype=bool)
        return float(np.mean(self.matrix[off_diagonal] == 0.0))

    def summary(self) -> dict:
        return {
            "tau": self.tau,
            "s_n_realized": self.nonzeros_per_row_max,
            "off_diagonal_zero_fraction": self.zero_fraction,
            "pd_repaired": self.pd_repaired,
        }
