from dataclasses import asdict, dataclass, field

from rfavar.errors import ConfigError

# (N, T) ladder used for the consistency checks
DEFAULT_LADDER = ((50, 100), (100, 200), (200, 400))


@dataclass(frozen=True)
class MonteCarloConfig:
    sizes: tuple[tuple[int, int], ...] = DEFAULT_LADDER
    n_reps: int = 20
    r1: int = 3
    r2: int = 1
    beta: float = 1.0
    zero_fraction: float = 0.6
    grid1: tuple[float, ...] = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    grid2: tuple[float, ...] = (0.0, 0.1)
    f1_threshold: float = 0.8
    seed: int = 0
    n_jobs: int = 1

    def validate(self) -> "MonteCarloConfig":
        if not self.sizes:
            raise ConfigError("sizes", "at least one (N, T) pair is required")
        for n, t in self.sizes:
            if n < 2 * (self.r1 + self.r2) or t < 2 * (self.r1 + self.r2) + 2:
                raise ConfigError("sizes", f"(N, T) = ({n}, {t}) too small for r1 + r2 = {self.r1 + self.r2}")
        if self.n_reps < 1:
            raise ConfigError("n_reps", f"replication count must be at least 1, got {self.n_reps}")
        if self.r1 < 1 or self.r2 < 0:
            raise ConfigError("r1", f"need r1 >= 1 and r2 >= 0, got r1={self.r1}, r2={self.r2}")
        if not 0.5 <= self.beta <= 1.0:
            raise ConfigError("beta", f"allowed range is [0.5, 1], got {self.beta}")
        if not 0.0 <= self.zero_fraction < 1.0:
            raise ConfigError("zero_fraction", f"allowed range is [0, 1), got {self.zero_fraction}")
        if not self.grid1 or not self.grid2:
            raise ConfigError("grid1", "penalty grids must be nonempty")
        if not 0.0 <= self.f1_threshold <= 1.0:
            raise ConfigError("f1_threshold", f"allowed range is [0, 1], got {self.f1_threshold}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AssertionOutcome:
    name: str
    status: str  # "pass" | "fail" | "insufficient"
    values: list[float] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "values": [float(v) for v in self.values]}
