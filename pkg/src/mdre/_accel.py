"""Backend selection for the numeric kernels.

Set ``MDRE_NUMBA=0`` before import to force the pure-numpy path. Numba is
used when it imports cleanly and the flag is not disabled.
"""
import os

_flag = os.environ.get("MDRE_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "no", "off")

try:
    if not _want_numba:
        raise ImportError
    # the bundled TBB is often too old; skip probing it
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range

BACKEND = "numba" if HAS_NUMBA else "numpy"
