"""Backend selection for the hot kernels.

Set ``DUALFLOW_DISABLE_NUMBA=1`` to force the pure-numpy path. The numba
path is also skipped silently when numba cannot be imported.
"""
import os

_FLAG = "DUALFLOW_DISABLE_NUMBA"

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None

HAVE_NUMBA = _nb is not None


def numba_enabled():
    if not HAVE_NUMBA:
        return False
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged.

    Compilation is independent of the env flag so both paths stay importable
    for the equivalence tests and the benchmark.
    """
    if _nb is None:
        return func
    return _nb.njit(cache=True, fastmath=False)(func)
