"""Optional numba acceleration.

Hot kernels are written twice: an explicit-loop version compiled with
``numba.njit`` and a vectorized numpy version.  Which one runs is decided
once at import time:

* ``AXIHARM_DISABLE_NUMBA=1`` forces the numpy path,
* a missing numba installation silently falls back to numpy,
* ``AXIHARM_THREADS`` caps the numba thread pool.
"""

import os

_disabled = os.environ.get("AXIHARM_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and not _disabled

if NUMBA_AVAILABLE and os.environ.get("AXIHARM_THREADS"):
    try:
        numba.set_num_threads(int(os.environ["AXIHARM_THREADS"]))
    except (ValueError, RuntimeError):
        pass


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Compilation is lazy, so decorating a kernel costs nothing when the
    numpy path is selected.
    """
    if not NUMBA_AVAILABLE:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
