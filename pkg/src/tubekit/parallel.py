"""Order-preserving parallel map used by the CLI's --jobs flag."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["parallel_map", "default_jobs"]


def default_jobs() -> int:
    """Job count from TUBEKIT_JOBS, defaulting to 1."""
    raw = os.environ.get("TUBEKIT_JOBS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Map fn over items, preserving input order regardless of job count."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))
