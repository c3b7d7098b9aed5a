"""Numba availability and backend switch.

Set ``LOGACTIVE_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once at import of :mod:`logactive.kernels`.
"""

import os

DISABLE_ENV = "LOGACTIVE_DISABLE_NUMBA"

try:
    import numba  # noqa: F401
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def numba_requested() -> bool:
    flag = os.environ.get(DISABLE_ENV, "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


def use_numba() -> bool:
    return HAS_NUMBA and numba_requested()
