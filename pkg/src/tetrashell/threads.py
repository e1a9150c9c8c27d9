"""Worker-count control for the numba kernels.

All parallel kernels write to disjoint output slots and reduce in a fixed
order, so results do not depend on the worker count set here.
"""

import os

# Allow ``--threads`` above the core count on small machines; must run before numba import.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(4, os.cpu_count() or 1)))
# workqueue needs no external runtime and skips the TBB version probe
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numba  # noqa: E402


def max_threads() -> int:
    return numba.config.NUMBA_NUM_THREADS


def set_threads(n=None) -> int:
    """Cap kernel parallelism at ``n`` workers (default: available cores)."""
    if n is None:
        n = os.cpu_count() or 1
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    n = min(n, max_threads())
    numba.set_num_threads(n)
    return n


def get_threads() -> int:
    return numba.get_num_threads()
