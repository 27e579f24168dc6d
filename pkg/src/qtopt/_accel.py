"""Numba switch for the hot kernels.

Set ``QTOPT_DISABLE_NUMBA=1`` to force the pure-numpy / interpreted paths.
Both paths must produce identical results; ``benchmarks/bench_kernels.py``
times them against each other.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("QTOPT_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")


def jit(fn):
    """Compile ``fn`` in nopython mode when numba is importable.

    Returns the plain function otherwise. Dispatch between compiled and
    fallback implementations is done by the caller via ``USE_NUMBA``.
    """
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
