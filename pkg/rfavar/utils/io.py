import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(payload, file, indent=2, sort_keys=True, default=_default)
        file.write("\n")
    logger.info("Wrote %s", path)
    return path


def read_json(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)


def write_frame(path: str | Path, frame: pd.DataFrame, index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
    logger.info("Wrote %s", path)
    return path


def write_matrix(path: str | Path, matrix: np.ndarray, row_labels: list[str], column_labels: list[str]) -> Path:
    frame = pd.DataFrame(matrix, index=pd.Index(row_labels, name="series"), columns=column_labels)
    return write_frame(path, frame, index=True)
