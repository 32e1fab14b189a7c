from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LoadingsMatrix:
    """Lambda = [Lambda^f  Lambda^g]; zeros are exact, never merely small."""
    latent: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        latent = np.atleast_2d(np.asarray(self.latent, dtype=float))
        observed = np.asarray(self.observed, dtype=float)
        if observed.ndim == 1:
            observed = observed.reshape(latent.shape[0], -1)
        if observed.shape[0] != latent.shape[0]:
            raise ValueError(f"Latent block has {latent.shape[0]} rows, observed block {observed.shape[0]}")
        object.__setattr__(self, "latent", latent)
        object.__setattr__(self, "observed", observed)

    @classmethod
    def from_full(cls, full: np.ndarray, r1: int) -> "LoadingsMatrix":
        full = np.asarray(full, dtype=float)
        return cls(full[:, :r1].copy(), full[:, r1:].copy())

    @classmethod
    def zeros(cls, n: int, r1: int, r2: int) -> "LoadingsMatrix":
        return cls(np.zeros((n, r1)), np.zeros((n, r2)))

    @property
    def full(self) -> np.ndarray:
        return np.hstack([self.latent, self.observed])

    @property
    def zero_mask(self) -> np.ndarray:
        return self.full == 0.0

    @property
    def n_series(self) -> int:
        return self.latent.shape[0]

    @property
    def r1(self) -> int:
        return self.latent.shape[1]

    @property
    def r2(self) -> int:
        return self.observed.shape[1]

    @property
    def nonzero_count(self) -> int:
        """kappa: number of non-zero loadings over both blocks."""
        return int(np.count_nonzero(self.full))

    def column_nonzeros(self) -> np.ndarray:
        return np.count_nonzero(self.full, axis=0)

    def to_dict(self) -> dict:
        return {
            "latent": self.latent.tolist(),
            "observed": self.observed.tolist(),
            "zero_mask": self.zero_mask.tolist(),
            "nonzero_count": self.nonzero_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LoadingsMatrix":
        latent = np.asarray(data["latent"], dtype=float)
        return cls(latent, np.asarray(data["observed"], dtype=float).reshape(latent.shape[0], -1))
