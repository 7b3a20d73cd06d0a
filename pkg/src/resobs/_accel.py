"""Numba acceleration shim.

The hot numeric kernels in :mod:`resobs.kernels` are written once and either
compiled with ``numba.njit`` or left as plain numpy code. Set the environment
variable ``RESOBS_DISABLE_NUMBA=1`` before import to force the pure-numpy
path; the package also falls back automatically when numba cannot be
imported. ``benchmarks/bench_kernels.py`` compares both paths.
"""

import os


def _disabled_by_env() -> bool:
    return os.environ.get("RESOBS_DISABLE_NUMBA", "").strip().lower() in {
        "1", "true", "yes", "on",
    }


NUMBA_ENABLED = False
_njit = None
if not _disabled_by_env():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def maybe_njit(func):
    """Compile ``func`` with numba when enabled, otherwise return it as is."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func
