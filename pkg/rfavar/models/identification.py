from dataclasses import dataclass, field

import numpy as np

from rfavar.models.loadings import LoadingsMatrix
from rfavar.models.scheme import Scheme
from rfavar.models.var import VarModel


@dataclass
class RotationPair:
    a: np.ndarray
    a_inv: np.ndarray
    scheme: Scheme


@dataclass
class IdentifiedModel:
    loadings_hat: LoadingsMatrix  # B_0
    factors_hat: np.ndarray
    var_hat: VarModel
    omega_star: np.ndarray
    scheme: Scheme
    column_order: list[int]
    signs: np.ndarray
    rotation: RotationPair
    naming_rows: list[int] = field(default_factory=list)

    @property
    def r1(self) -> int:
        return self.loadings_hat.r1

    @property
    def r2(self) -> int:
        return self.loadings_hat.r2

    @property
    def impact_factors(self) -> np.ndarray:
        return self.rotation.a_inv

    @property
    def impact_observables(self) -> np.ndarray:
        return self.loadings_hat.full

    def to_dict(self) -> dict:
        return {
            "scheme": str(self.scheme),
            "column_order": list(self.column_order),
            "signs": [int(s) for s in self.signs],
            "naming_rows": list(self.naming_rows),
            "omega_star": self.omega_star.tolist(),
            "a": self.rotation.a.tolist(),
            "a_inv": self.rotation.a_inv.tolist(),
            "loadings_hat": self.loadings_hat.to_dict(),
            "var_hat": self.var_hat.to_dict(),
        }


@dataclass(frozen=True)
class IdentificationReport:
    required: int
    zero_restrictions: int
    normalization_restrictions: int
    passed: bool

    @property
    def available(self) -> int:
        return self.zero_restrictions + self.normalization_restrictions

    def to_dict(self) -> dict:
        return {
            "required": self.required,
            "zero_restrictions": self.zero_restrictions,
            "normalization_restrictions": self.normalization_restrictions,
            "available": self.available,
            "status": "pass" if self.passed else "warn",
            "note": "restriction count is a necessary condition only, not the full rank condition",
        }
