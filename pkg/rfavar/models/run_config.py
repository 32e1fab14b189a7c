from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from rfavar._constants import (
    DEFAULT_C, DEFAULT_CI_LEVEL, DEFAULT_LAG_ORDER, DEFAULT_MAX_ITER, DEFAULT_R_MAX, DEFAULT_TOL,
)
from rfavar.errors import ConfigError
from rfavar.models.scheme import Command, Scheme

AUTO = "auto"
FIT_ARTIFACTS = ("fit.json", "manifest.json", "panel_standardized.csv", "panel_standardized.meta.json")


@dataclass(frozen=True)
class ModelSettings:
    r1: int | str = AUTO
    r_max: int = DEFAULT_R_MAX
    p: int = DEFAULT_LAG_ORDER
    scheme: Scheme = Scheme.IRA
    naming: tuple[str, ...] = ()  # IRb: one series id per latent factor
    mu1: float | None = None
    mu2: float | None = None
    grid1: tuple[float, ...] | None = None
    grid2: tuple[float, ...] | None = None
    c: float = DEFAULT_C
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    intercept: bool = True

    @property
    def auto_r1(self) -> bool:
        return self.r1 == AUTO

    @property
    def fixed_penalties(self) -> bool:
        return self.mu1 is not None or self.mu2 is not None


@dataclass(frozen=True)
class IrfSettings:
    h_max: int = 48
    shock: str | None = None  # observed series id; default the last observed factor
    bp: float = 100.0  # shock size in basis points of the shocked series
    boot: int = 200
    ci_level: float = DEFAULT_CI_LEVEL
    series_units: bool = False  # also express each response in its series' own units


@dataclass(frozen=True)
class RunConfig:
    """One JSON document per run; command-line flags override its keys."""
    command: Command
    out: str = "out"
    seed: int = 0
    threads: int | None = None
    panel: str | None = None
    spec: str | None = None
    observed: tuple[str, ...] = ()
    start: str | None = None
    end: str | None = None
    fit: str | None = None  # irf: output directory of an earlier estimate
    dgp: dict[str, Any] = field(default_factory=dict)
    model: ModelSettings = field(default_factory=ModelSettings)
    irf: IrfSettings = field(default_factory=IrfSettings)
    montecarlo: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict[str, Any], command: Command | str | None = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        try:
            model = _build(ModelSettings, data.get("model", {}), "model")
            irf = _build(IrfSettings, data.get("irf", {}), "irf")
            return cls(
                command=Command(command or data.get("command")),
                out=str(data.get("out", "out")),
                seed=int(data.get("seed", 0)),
                threads=data.get("threads"),
                panel=data.get("panel"),
                spec=data.get("spec"),
                observed=tuple(data.get("observed", ())),
                start=data.get("start"),
                end=data.get("end"),
                fit=data.get("fit"),
                dgp=dict(data.get("dgp", {})),
                model=replace(
                    model,
                    scheme=Scheme(model.scheme),
                    naming=tuple(model.naming),
                    grid1=None if model.grid1 is None else tuple(float(v) for v in model.grid1),
                    grid2=None if model.grid2 is None else tuple(float(v) for v in model.grid2),
                ),
                irf=irf,
                montecarlo=dict(data.get("montecarlo", {})),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError("config", str(e)) from e

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Apply flag values that were actually given (None means absent)."""
        top, model, irf = {}, {}, {}
        targets = {
            "seed": (top, "seed"), "out": (top, "out"), "threads": (top, "threads"), "fit": (top, "fit"),
            "r1": (model, "r1"), "p": (model, "p"), "mu1": (model, "mu1"), "mu2": (model, "mu2"),
            "scheme": (model, "scheme"),
            "shock": (irf, "shock"), "bp": (irf, "bp"), "boot": (irf, "boot"), "hmax": (irf, "h_max"),
        }
        for key, value in overrides.items():
            if value is None or key not in targets:
                continue
            bucket, name = targets[key]
            bucket[name] = value
        if "scheme" in model:
            model["scheme"] = Scheme(model["scheme"])
        if "r1" in model and model["r1"] != AUTO:
            model["r1"] = int(model["r1"])
        return replace(self, **top, model=replace(self.model, **model), irf=replace(self.irf, **irf))

    def validate(self) -> "RunConfig":
        model, irf = self.model, self.irf
        if self.seed < 0:
            raise ConfigError("seed", f"must be an unsigned integer, got {self.seed}")
        if self.threads is not None and int(self.threads) < 1:
            raise ConfigError("threads", f"must be at least 1, got {self.threads}")
        if self.command in (Command.ESTIMATE, Command.IRF):
            if not self.panel:
                raise ConfigError("panel", f"'{self.command}' needs a panel CSV path")
            for name in ("panel", "spec"):
                path = getattr(self, name)
                if path is not None and not Path(path).is_file():
                    raise ConfigError(name, f"file not found: {path}")
        if self.fit is not None:
            if self.command != Command.IRF:
                raise ConfigError("fit", f"only 'irf' reuses an earlier fit, not '{self.command}'")
            missing = [name for name in FIT_ARTIFACTS if not (Path(self.fit) / name).is_file()]
            if missing:
                raise ConfigError("fit", f"{self.fit} lacks {', '.join(missing)}; point it at an 'estimate' output")
        if not model.auto_r1 and (not isinstance(model.r1, int) or model.r1 < 1):
            raise ConfigError("model.r1", f"must be '{AUTO}' or an integer >= 1, got {model.r1!r}")
        if model.r_max < 1:
            raise ConfigError("model.r_max", f"must be at least 1, got {model.r_max}")
        if model.p < 1:
            raise ConfigError("model.p", f"must be at least 1, got {model.p}")
        for name in ("mu1", "mu2"):
            value = getattr(model, name)
            if value is not None and value < 0:
                raise ConfigError(f"model.{name}", f"must be nonnegative, got {value}")
        for name in ("grid1", "grid2"):
            grid = getattr(model, name)
            if grid is not None and (not grid or list(grid) != sorted(grid) or min(grid) < 0):
                raise ConfigError(f"model.{name}", "must be a nonempty ascending list of nonnegative values")
        if model.c <= 0:
            raise ConfigError("model.c", f"must be positive, got {model.c}")
        if model.tol <= 0:
            raise ConfigError("model.tol", f"must be positive, got {model.tol}")
        if model.max_iter < 1:
            raise ConfigError("model.max_iter", f"must be at least 1, got {model.max_iter}")
        if model.scheme == Scheme.IRB and self.command in (Command.ESTIMATE, Command.IRF):
            if model.auto_r1 or len(model.naming) != model.r1:
                raise ConfigError("model.naming", "IRb needs a fixed r1 and exactly r1 naming series")
        if irf.h_max < 0:
            raise ConfigError("irf.h_max", f"must be nonnegative, got {irf.h_max}")
        if irf.boot < 0:
            raise ConfigError("irf.boot", f"must be nonnegative, got {irf.boot}")
        if not 0.0 < irf.ci_level < 1.0:
            raise ConfigError("irf.ci_level", f"allowed range is (0, 1), got {irf.ci_level}")
        return self

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["command"] = str(self.command)
        payload["model"]["scheme"] = str(self.model.scheme)
        return payload


def _build(cls, values: dict[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown configuration key")
    return cls(**values)
