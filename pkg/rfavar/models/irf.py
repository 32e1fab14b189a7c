from dataclasses import dataclass, field

import numpy as np

from rfavar._constants import DEFAULT_CI_LEVEL
from rfavar.models.scheme import Scheme


@dataclass
class IrfResult:
    """Responses to one structural shock; arrays are (h_max + 1) x r and (h_max + 1) x N."""
    factor_irf: np.ndarray
    observable_irf: np.ndarray
    shock_index: int
    shock_size_standardized: float
    accumulated: np.ndarray | None = None
    factor_lower: np.ndarray | None = None
    factor_upper: np.ndarray | None = None
    ci_lower: np.ndarray | None = None
    ci_upper: np.ndarray | None = None
    ci_level: float = DEFAULT_CI_LEVEL
    n_boot: int = 0
    n_dropped: int = 0
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.accumulated is None:
            self.accumulated = np.zeros(self.observable_irf.shape[1], dtype=bool)

    @property
    def horizons(self) -> np.ndarray:
        return np.arange(self.factor_irf.shape[0])

    @property
    def h_max(self) -> int:
        return self.factor_irf.shape[0] - 1

    @property
    def has_bands(self) -> bool:
        return self.ci_lower is not None


@dataclass(frozen=True)
class BootstrapOptions:
    n_boot: int = 200
    h_max: int = 48
    shock_index: int = -1  # -1: last component, the observed policy factor
    shock_size: float = 1.0
    ci_level: float = DEFAULT_CI_LEVEL
    seed: int = 0
    scheme: Scheme = Scheme.IRA
    naming_rows: tuple[int, ...] = ()
    intercept: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_boot < 1:
            raise ValueError(f"n_boot must be at least 1, got {self.n_boot}")
        if self.h_max < 0:
            raise ValueError(f"h_max must be nonnegative, got {self.h_max}")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError(f"ci_level must lie in (0, 1), got {self.ci_level}")
