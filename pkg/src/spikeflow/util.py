"""Small shared runtime helpers."""

from __future__ import annotations

import os

__all__ = ["thread_cap", "THREADS_ENV"]

THREADS_ENV = "SPIKEFLOW_THREADS"


def thread_cap() -> int:
    """Upper bound on internal worker parallelism, from SPIKEFLOW_THREADS.

    Every compute kernel in this package currently runs serially, so results
    are identical for any setting; the cap exists so future parallel kernels
    stay bounded and so invalid settings fail loudly up front.
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value
