"""Optional numba acceleration.

Set ``APSEST_DISABLE_NUMBA=1`` (or run without numba installed) to execute
the kernels as plain numpy code. Both paths run the same source.
"""

import os

_flag = os.environ.get("APSEST_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None

JIT_ENABLED = _nb is not None and _flag not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise an identity decorator."""
    if JIT_ENABLED:
        return _nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
