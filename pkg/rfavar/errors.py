"""Exception hierarchy and warning categories.

Each family maps to one CLI exit code (see ``EXIT_CODES``).
"""


class RfavarError(Exception):
    """Base class for every error raised by rfavar."""


class ConfigError(RfavarError, ValueError):
    """Raised when a run or DGP configuration is invalid."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class EstimationError(RfavarError):
    """Raised when data ingestion or estimation cannot proceed."""


class AnalysisError(RfavarError):
    """Raised when structural analysis (IRFs, bands) cannot proceed."""


class AcceptanceFailure(RfavarError):
    """Raised when a Monte Carlo acceptance assertion fails."""


# --- panel data ---

class UnknownTransformCode(EstimationError, ValueError):
    pass


class NonPositiveForLog(EstimationError, ValueError):
    pass


class SeriesTooShort(EstimationError, ValueError):
    pass


class ZeroVarianceSeries(EstimationError, ValueError):

    def __init__(self, series_id: str):
        self.series_id = series_id
        super().__init__(f"Series '{series_id}' has zero sample variance")


class MissingSeries(EstimationError, KeyError):

    def __init__(self, series_ids: list[str]):
        self.series_ids = list(series_ids)
        super().__init__(f"Series not found: {', '.join(self.series_ids)}")

    def __str__(self) -> str:
        return self.args[0]


class RaggedCsv(EstimationError, ValueError):
    pass


class MissingValues(EstimationError, ValueError):
    pass


class WindowTooShort(EstimationError, ValueError):
    pass


# --- numerical ---

class RankDeficient(EstimationError):
    pass


class SingularGram(EstimationError):
    pass


class NotPositiveDefinite(EstimationError):
    pass


class SingularWeightedGram(EstimationError):
    pass


class EmptyGrid(EstimationError, ValueError):
    pass


class UnstableVar(EstimationError):
    pass


class InsufficientObservations(EstimationError, ValueError):
    pass


class SingularRegressors(EstimationError):
    pass


class DimensionMismatch(EstimationError, ValueError):
    pass


class SingularOmegaGg(EstimationError):
    pass


class SingularNamingBlock(EstimationError):

    def __init__(self, condition_number: float):
        self.condition_number = condition_number
        super().__init__(f"Naming block is singular (condition number {condition_number:.3e})")


# --- analysis ---

class BadShockIndex(AnalysisError, IndexError):
    pass


class UnknownShockSeries(AnalysisError, KeyError):

    def __str__(self) -> str:
        return self.args[0]


class CodeLengthMismatch(AnalysisError, ValueError):
    pass


class BadScale(AnalysisError, ValueError):
    pass


class DegenerateBands(AnalysisError):
    pass


# --- warnings ---

class ConvergenceWarning(UserWarning):
    """Iteration limit reached before the tolerance was met; last iterate returned."""


class IdentificationWarning(UserWarning):
    """A block that should vanish by construction exceeded its tolerance."""


class BandWarning(UserWarning):
    """Percentile bands fail to bracket the point estimate somewhere."""


EXIT_CODES: dict[type[RfavarError], int] = {
    ConfigError: 2,
    EstimationError: 3,
    AnalysisError: 4,
    AcceptanceFailure: 5,
}


def exit_code_for(error: RfavarError) -> int:
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    return 1
