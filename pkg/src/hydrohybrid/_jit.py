"""Optional numba import.

The scalar model kernels are JIT compiled when numba is present; without it
they run as plain Python (correct, but a 10 s scenario then takes minutes).
"""

from __future__ import annotations

try:
    from numba import njit  # type: ignore

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - fallback for missing numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def deco(fn):
            return fn

        return deco
