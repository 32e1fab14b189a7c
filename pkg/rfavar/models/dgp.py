from dataclasses import dataclass, asdict

import numpy as np

from rfavar.errors import ConfigError
from rfavar.models.loadings import LoadingsMatrix


@dataclass(frozen=True)
class DgpConfig:
    n_series: int
    n_periods: int
    r1: int
    r2: int = 1
    p: int = 1
    beta: float = 1.0  # pervasiveness exponent: column norm^2 = N^beta
    zero_fraction: float = 0.0
    idio_band: int = 1  # S_N: nonzeros per row of Sigma_e
    idio_rho: float = 0.0
    seed: int = 0
    idio_scale: float = 1.0
    unit_factor_variance: bool = True
    orthogonalize: bool = False  # exact in-sample F'G = 0
    zero_loadings: bool = False  # test hook: X = e

    @property
    def r(self) -> int:
        return self.r1 + self.r2

    def validate(self) -> "DgpConfig":
        if self.r1 < 0 or self.r2 < 0 or self.r < 1:
            raise ConfigError("r1", f"r1 + r2 must be at least 1, got r1={self.r1}, r2={self.r2}")
        if self.n_series < self.r:
            raise ConfigError("n_series", f"must be at least r1 + r2 = {self.r}, got {self.n_series}")
        if self.p < 1:
            raise ConfigError("p", f"must be at least 1, got {self.p}")
        if self.n_periods <= self.p * self.r:
            raise ConfigError("n_periods", f"must exceed p * (r1 + r2) = {self.p * self.r}, got {self.n_periods}")
        if not 0.5 <= self.beta <= 1.0:
            raise ConfigError("beta", f"allowed range is [0.5, 1], got {self.beta}")
        if not 0.0 <= self.zero_fraction < 1.0:
            raise ConfigError("zero_fraction", f"allowed range is [0, 1), got {self.zero_fraction}")
        if self.n_series - self.zeros_per_column < self.r:
            raise ConfigError("zero_fraction", f"leaves fewer than r1 + r2 = {self.r} nonzeros per column")
        if self.idio_band < 1:
            raise ConfigError("idio_band", f"must be at least 1, got {self.idio_band}")
        if not -1.0 < self.idio_rho < 1.0:
            raise ConfigError("idio_rho", f"allowed range is (-1, 1), got {self.idio_rho}")
        if self.idio_scale <= 0:
            raise ConfigError("idio_scale", f"must be positive, got {self.idio_scale}")
        if self.seed < 0:
            raise ConfigError("seed", f"must be an unsigned integer, got {self.seed}")
        return self

    @property
    def zeros_per_column(self) -> int:
        return int(round(self.zero_fraction * self.n_series))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DgpTruth:
    X: np.ndarray  # N x T
    F: np.ndarray  # T x r1
    G: np.ndarray  # T x r2
    loadings: LoadingsMatrix
    sigma_e: np.ndarray
    phi: list[np.ndarray]
    omega: np.ndarray
    config: DgpConfig

    @property
    def H(self) -> np.ndarray:
        return np.hstack([self.F, self.G])

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "loadings": self.loadings.to_dict(),
            "phi": [phi_i.tolist() for phi_i in self.phi],
            "omega": self.omega.tolist(),
            "sigma_e": self.sigma_e.tolist(),
        }
