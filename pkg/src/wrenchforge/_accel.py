"""Optional numba acceleration.

Kernels in :mod:`wrenchforge._kernels` are written so the same source runs
either compiled by numba or as plain Python/numpy.  Set
``WRENCHFORGE_NUMBA=0`` before import to force the pure-numpy path.
"""
import os

_flag = os.environ.get("WRENCHFORGE_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a soft dependency
    _numba = None

USE_NUMBA = _requested and _numba is not None


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    kwargs.setdefault("cache", True)
    if USE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]

    def wrap(fn):
        return fn

    return wrap


def py_func(fn):
    """Return the uncompiled Python function behind a (maybe) jitted kernel."""
    return getattr(fn, "py_func", fn)


def thread_count():
    """Worker cap from ``WRENCHFORGE_THREADS`` (default: available cores)."""
    raw = os.environ.get("WRENCHFORGE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
