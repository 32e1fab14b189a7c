import logging
from pathlib import Path

import numpy as np
import pandas as pd

from rfavar.data.transforms import apply_transform, standardize
from rfavar.errors import MissingSeries, MissingValues, RaggedCsv, UnknownTransformCode, WindowTooShort
from rfavar.models.panel import ObservedBlock, SeriesSpec, TimePanel
from rfavar.models.transform_code import TransformCode
from rfavar.utils.io import FLOAT_FORMAT, read_json, write_json

logger = logging.getLogger(__name__)


def read_raw_panel(path: str | Path) -> pd.DataFrame:
    """Periods as rows, series ids as columns, ISO-8601 labels in the first column."""
    try:
        frame = pd.read_csv(path, index_col=0, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        raise RaggedCsv(f"{path}: {e}") from e
    frame.index = frame.index.astype(str)

    # keep_default_na=False leaves real NaN only where a row ran out of fields
    absent = frame.isna().to_numpy()
    if absent.any():
        rows, cols = np.nonzero(absent)
        raise RaggedCsv(f"{path}: row for period {frame.index[rows[0]]} has no field for '{frame.columns[cols[0]]}'")

    empty = frame.apply(lambda column: column.str.strip() == "")
    if empty.to_numpy().any():
        rows, cols = np.nonzero(empty.to_numpy())
        raise MissingValues(f"{path}: missing value for '{frame.columns[cols[0]]}' at period {frame.index[rows[0]]}")
    try:
        frame = frame.astype(float)
    except ValueError as e:
        raise RaggedCsv(f"{path}: non-numeric entry ({e})") from e
    if not np.all(np.isfinite(frame.to_numpy())):
        raise MissingValues(f"{path}: panel contains non-finite values")
    return frame


def read_transform_specs(spec_path: str | Path | None, series_ids: list[str]) -> dict[str, SeriesSpec]:
    """Two-column `id,transform_code` CSV; without one every series stays in levels."""
    if spec_path is None:
        return {series_id: SeriesSpec(series_id, TransformCode.LEVEL) for series_id in series_ids}

    table = pd.read_csv(spec_path, dtype={"id": str}, encoding="utf-8")
    if not {"id", "transform_code"} <= set(table.columns):
        raise RaggedCsv(f"{spec_path}: expected columns id,transform_code, got {list(table.columns)}")
    specs = {}
    for row in table.itertuples(index=False):
        display_name = getattr(row, "display_name", "") or ""
        specs[row.id] = SeriesSpec(row.id, _transform_code(spec_path, row.id, row.transform_code), str(display_name))

    missing = [series_id for series_id in series_ids if series_id not in specs]
    if missing:
        raise MissingSeries(missing)
    return specs


def _transform_code(spec_path, series_id: str, raw) -> TransformCode:
    try:
        value = float(raw)
        if not value.is_integer():
            raise ValueError(raw)
        return TransformCode(int(value))
    except (TypeError, ValueError):
        raise UnknownTransformCode(
            f"{spec_path}: series '{series_id}' has transform code {raw!r}; expected one of 1..6") from None


def load_panel(
        path: str | Path,
        spec_path: str | Path | None,
        observed_ids: list[str],
        min_factors: int = 1,
        start: str | None = None,
        end: str | None = None,
) -> tuple[TimePanel, ObservedBlock]:
    """
    Load, transform, align and standardize a panel.
    Args:
        path: panel CSV
        spec_path: `id,transform_code` CSV (None: all levels)
        observed_ids: series treated as observed factors g_t
        min_factors: r1 used for the window-length check
        start, end: optional inclusive period-label bounds applied before transforms
    Returns:
        x-block TimePanel and the separately standardized observed block
    """
    frame = read_raw_panel(path)
    missing = [series_id for series_id in observed_ids if series_id not in frame.columns]
    if missing:
        raise MissingSeries(missing)

    if start is not None:
        frame = frame.loc[frame.index >= start]
    if end is not None:
        frame = frame.loc[frame.index <= end]

    specs = read_transform_specs(spec_path, list(frame.columns))
    trim = max(specs[series_id].transform_code.diff_order for series_id in frame.columns)
    n_periods = len(frame) - trim
    r2 = len(observed_ids)
    if n_periods <= min_factors + r2:
        raise WindowTooShort(f"{n_periods} usable periods after trimming {trim}; need more than {min_factors + r2}")

    transformed = {}
    for series_id in frame.columns:
        spec = specs[series_id]
        series = apply_transform(frame[series_id].to_numpy(), spec.transform_code)
        # every series keeps the common window that starts after the largest differencing order
        transformed[series_id] = series[trim - spec.transform_code.diff_order:]

    labels = list(frame.index[trim:])
    x_ids = [series_id for series_id in frame.columns if series_id not in observed_ids]

    x_values, x_means, x_stds = standardize(np.vstack([transformed[i] for i in x_ids]), x_ids)
    panel = TimePanel(
        values=x_values,
        specs=[specs[i] for i in x_ids],
        means=x_means,
        stds=x_stds,
        period_labels=labels,
        trimmed_periods=trim,
    )

    if r2:
        g_values, g_means, g_stds = standardize(np.vstack([transformed[i] for i in observed_ids]), list(observed_ids))
        g_matrix = g_values.T
    else:
        g_matrix, g_means, g_stds = np.zeros((n_periods, 0)), np.zeros(0), np.zeros(0)
    observed = ObservedBlock(
        values=g_matrix,
        ids=list(observed_ids),
        means=g_means,
        stds=g_stds,
        codes=[specs[i].transform_code for i in observed_ids],
    )

    logger.info("Loaded panel %s: N=%d, T=%d, r2=%d, trimmed %d periods", path, panel.n_series, n_periods, r2, trim)
    return panel, observed


def write_raw_panel(path: str | Path, values: np.ndarray, ids: list[str], period_labels: list[str]) -> Path:
    """Write an N x T matrix in the panel CSV layout (periods as rows)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.asarray(values).T, index=pd.Index(period_labels, name="period"), columns=ids)
    return _write_panel_frame(path, frame)


def _write_panel_frame(path: Path, frame: pd.DataFrame) -> Path:
    frame.to_csv(path, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
    return path


def write_transform_specs(path: str | Path, specs: list[SeriesSpec]) -> Path:
    path = Path(path)
    frame = pd.DataFrame({"id": [s.id for s in specs], "transform_code": [int(s.transform_code) for s in specs]})
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return path


def metadata_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_panel(panel: TimePanel, path: str | Path) -> tuple[Path, Path]:
    """Standardized panel CSV plus a JSON sidecar with means, stds and trim count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_path = _write_panel_frame(path, panel.to_frame())
    meta_path = write_json(metadata_path(path), panel.metadata())
    return csv_path, meta_path


def read_saved_panel(path: str | Path) -> TimePanel:
    frame = read_raw_panel(path)
    meta = read_json(metadata_path(path))
    specs = [SeriesSpec(s["id"], TransformCode(s["transform_code"]), s["display_name"]) for s in meta["series"]]
    return TimePanel(
        values=frame.to_numpy().T.copy(),
        specs=specs,
        means=np.asarray(meta["means"]),
        stds=np.asarray(meta["stds"]),
        period_labels=list(frame.index),
        trimmed_periods=meta["trimmed_periods"],
    )
