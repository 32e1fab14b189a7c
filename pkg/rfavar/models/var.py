from dataclasses import dataclass, field

import numpy as np


@dataclass
class VarModel:
    p: int
    phi: list[np.ndarray]
    omega: np.ndarray
    residuals: np.ndarray
    companion_radius: float
    intercept: np.ndarray | None = None
    initial_values: np.ndarray | None = None  # first p rows of the data the VAR was fit on

    def __post_init__(self):
        if self.p < 1 or len(self.phi) != self.p:
            raise ValueError(f"Expected {self.p} coefficient matrices, got {len(self.phi)}")

    @property
    def n_vars(self) -> int:
        return self.omega.shape[0]

    def transformed(self, a: np.ndarray, a_inv: np.ndarray) -> "VarModel":
        """The same VAR for h* = A h: Phi* = A Phi A^-1, Omega* = A Omega A'."""
        omega = a @ self.omega @ a.T
        return VarModel(
            p=self.p,
            phi=[a @ phi_i @ a_inv for phi_i in self.phi],
            omega=(omega + omega.T) / 2,
            residuals=self.residuals @ a.T,
            companion_radius=self.companion_radius,
            intercept=None if self.intercept is None else a @ self.intercept,
            initial_values=None if self.initial_values is None else self.initial_values @ a.T,
        )

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "phi": np.hstack(self.phi).tolist(),
            "omega": self.omega.tolist(),
            "intercept": None if self.intercept is None else self.intercept.tolist(),
            "companion_radius": self.companion_radius,
        }


@dataclass
class MaCoefficients:
    psi: list[np.ndarray] = field(default_factory=list)

    @property
    def h_max(self) -> int:
        return len(self.psi) - 1
