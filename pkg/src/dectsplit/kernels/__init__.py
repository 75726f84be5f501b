"""Kernel backend selection.

The numba backend is used by default; set DECTSPLIT_NO_NUMBA=1 (or install
without numba) to fall back to the pure-numpy implementations. Both backends
share the same function signatures and agree to floating-point roundoff.
"""

import os

_flag = os.environ.get("DECTSPLIT_NO_NUMBA", "").strip().lower()
_want_numba = _flag not in ("1", "true", "yes", "on")

if _want_numba:
    try:
        from . import numba_impl as _impl
    except ImportError:
        from . import numpy_impl as _impl
else:
    from . import numpy_impl as _impl

BACKEND = _impl.__name__.rsplit(".", 1)[-1].removesuffix("_impl")

forward_project = _impl.forward_project
back_project = _impl.back_project
interp_back_project = _impl.interp_back_project
poly_forward = _impl.poly_forward
poly_forward_grad = _impl.poly_forward_grad
lm_decompose = _impl.lm_decompose
SATURATED_LOG = _impl.SATURATED_LOG


def set_num_threads(n):
    """Set worker-thread count for the numba backend (no-op for numpy).

    Requests above the pool size numba allocated at import are clamped
    rather than rejected; results are thread-count-invariant by design,
    so the clamp only affects speed.
    """
    if BACKEND == "numba":
        import numba

        limit = numba.config.NUMBA_NUM_THREADS
        numba.set_num_threads(min(max(1, int(n)), limit))
