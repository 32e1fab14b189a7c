from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from rfavar.models.transform_code import TransformCode


@dataclass(frozen=True)
class SeriesSpec:
    id: str
    transform_code: TransformCode
    display_name: str = ""

    def __post_init__(self):
        if not self.id or self.id.strip() == "":
            raise ValueError("Series id cannot be null or empty")
        object.__setattr__(self, "transform_code", TransformCode(int(self.transform_code)))
        if not self.display_name:
            object.__setattr__(self, "display_name", self.id)


@dataclass
class TimePanel:
    """N series x T periods, each row standardized, plus what is needed to undo it."""
    values: np.ndarray
    specs: list[SeriesSpec]
    means: np.ndarray
    stds: np.ndarray
    period_labels: list[str]
    trimmed_periods: int = 0
    ddof: int = 1

    def __post_init__(self):
        n, t = self.values.shape
        if len(self.specs) != n or self.means.shape != (n,) or self.stds.shape != (n,):
            raise ValueError(f"Panel metadata does not match a {n} x {t} value matrix")
        if len(self.period_labels) != t:
            raise ValueError(f"Expected {t} period labels, got {len(self.period_labels)}")
        ids = [spec.id for spec in self.specs]
        if len(set(ids)) != len(ids):
            raise ValueError("Series ids must be unique within a panel")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Panel contains non-finite values")
        if np.any(self.stds <= 0):
            raise ValueError("Panel stds must be strictly positive")

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def ids(self) -> list[str]:
        return [spec.id for spec in self.specs]

    @property
    def codes(self) -> list[TransformCode]:
        return [spec.transform_code for spec in self.specs]

    def index_of(self, series_id: str) -> int:
        return self.ids.index(series_id)

    def to_frame(self) -> pd.DataFrame:
        """Periods as rows, series as columns: the on-disk panel layout."""
        return pd.DataFrame(self.values.T, index=pd.Index(self.period_labels, name="period"), columns=self.ids)

    def metadata(self) -> dict:
        return {
            "series": [
                {"id": spec.id, "transform_code": int(spec.transform_code), "display_name": spec.display_name}
                for spec in self.specs
            ],
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "trimmed_periods": self.trimmed_periods,
            "std_divisor": "T-1" if self.ddof == 1 else "T",
        }


@dataclass
class ObservedBlock:
    """Observed factors g_t (T x r2), standardized separately from the x-block."""
    values: np.ndarray
    ids: list[str]
    means: np.ndarray
    stds: np.ndarray
    codes: list[TransformCode] = field(default_factory=list)

    @property
    def n_factors(self) -> int:
        return self.values.shape[1]

    def std_of(self, series_id: str) -> float:
        return float(self.stds[self.ids.index(series_id)])

    def metadata(self) -> dict:
        return {"ids": self.ids, "means": self.means.tolist(), "stds": self.stds.tolist()}
