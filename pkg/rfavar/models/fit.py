import math
from dataclasses import dataclass, field

import numpy as np

from rfavar._constants import DEFAULT_C, DEFAULT_MAX_ITER, DEFAULT_TOL
from rfavar.models.loadings import LoadingsMatrix
from rfavar.models.scheme import SeedMethod


@dataclass(frozen=True)
class PenaltyPair:
    mu1: float = 0.0  # latent loadings
    mu2: float = 0.0  # observed-factor loadings

    def __post_init__(self):
        for name, value in (("mu1", self.mu1), ("mu2", self.mu2)):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")

    def to_dict(self) -> dict[str, float]:
        return {"mu1": float(self.mu1), "mu2": float(self.mu2)}


@dataclass(frozen=True)
class FitOptions:
    c: float = DEFAULT_C
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    inner_steps: int = 1
    backtrack: bool = True
    seed_method: SeedMethod = SeedMethod.PCA
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.inner_steps < 1:
            raise ValueError(f"inner_steps must be at least 1, got {self.inner_steps}")


@dataclass
class InitState:
    """Step-2 starting point: unpenalized latent block plus the observed-factor regression."""
    lambda_f: np.ndarray
    factors_f: np.ndarray
    phi_e: np.ndarray
    lambda_g: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def loadings(self) -> LoadingsMatrix:
        return LoadingsMatrix(self.lambda_f, self.lambda_g)


@dataclass
class EstimationState:
    """An MM-EM iterate: loadings and the diagonal of Phi_e."""
    loadings: LoadingsMatrix
    phi_e: np.ndarray
    iteration: int = 0
    step_size: float = DEFAULT_C
    surrogate: tuple[float, float] | None = None  # penalized surrogate before and after the sweep
    objective: float | None = None  # full penalized objective at this iterate, once computed


@dataclass
class RfavarFit:
    loadings: LoadingsMatrix
    phi_e: np.ndarray
    factors_f: np.ndarray
    objective_trace: list[float]
    penalties: PenaltyPair
    iterations: int
    converged: bool
    surrogate_trace: list[tuple[float, float]] = field(default_factory=list)

    @property
    def r1(self) -> int:
        return self.loadings.r1

    @property
    def r2(self) -> int:
        return self.loadings.r2

    def composite_factors(self, g: np.ndarray) -> np.ndarray:
        """h_t = (f_t', g_t')' stacked as a T x r matrix."""
        return np.hstack([self.factors_f, np.asarray(g, dtype=float).reshape(self.factors_f.shape[0], -1)])

    def common_component(self, g: np.ndarray) -> np.ndarray:
        return self.loadings.full @ self.composite_factors(g).T

    def to_dict(self) -> dict:
        return {
            "loadings": self.loadings.to_dict(),
            "phi_e": self.phi_e.tolist(),
            "factors_f": self.factors_f.tolist(),
            "objective_trace": [float(v) for v in self.objective_trace],
            "penalties": self.penalties.to_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RfavarFit":
        """Inverse of ``to_dict``; the surrogate trace is not stored."""
        return cls(
            loadings=LoadingsMatrix.from_dict(data["loadings"]),
            phi_e=np.asarray(data["phi_e"], dtype=float),
            factors_f=np.asarray(data["factors_f"], dtype=float),
            objective_trace=[float(v) for v in data["objective_trace"]],
            penalties=PenaltyPair(**data["penalties"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
        )


@dataclass(frozen=True)
class IcCell:
    mu1: float
    mu2: float
    ic: float
    kappa: int
    loglik: float
    converged: bool
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and math.isfinite(self.ic)


@dataclass
class IcSurface:
    cells: list[IcCell]
    multiplier: float

    def best(self) -> IcCell:
        usable = [cell for cell in self.cells if cell.ok]
        if not usable:
            raise ValueError("No grid cell produced a usable fit")
        # ties -> larger mu1, then larger mu2
        return min(usable, key=lambda cell: (cell.ic, -cell.mu1, -cell.mu2))

    def to_rows(self) -> list[dict]:
        return [
            {"mu1": cell.mu1, "mu2": cell.mu2, "ic": cell.ic, "kappa": cell.kappa,
             "loglik": cell.loglik, "converged": cell.converged, "error": cell.error or ""}
            for cell in self.cells
        ]
