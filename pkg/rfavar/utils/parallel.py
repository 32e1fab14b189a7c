import logging
from collections.abc import Callable, Iterable
from typing import Any

from joblib import Parallel, delayed

from rfavar._constants import THREADS

logger = logging.getLogger(__name__)


def resolve_threads(threads: int | None) -> int:
    """Explicit value wins, then RFAVAR_THREADS."""
    resolved = THREADS if threads is None else int(threads)
    if resolved < 1:
        raise ValueError(f"threads must be at least 1, got {resolved}")
    return resolved


def parallel_map(func: Callable[..., Any], items: Iterable[Any], n_jobs: int = 1) -> list[Any]:
    """Order-preserving map; results are identical whatever n_jobs is."""
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug("Dispatching %d tasks to %d workers", len(items), n_jobs)
    return Parallel(n_jobs=n_jobs)(delayed(func)(item) for item in items)
