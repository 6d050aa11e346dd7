"""Backend selection for the hot interpolation kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is used.  Setting ``CIMTRAJ_PURE_PYTHON=1`` forces the fallback.
Both backends produce the same results up to floating-point summation order.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CIMTRAJ_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _prep(padded, start, w):
    return (
        np.ascontiguousarray(padded, dtype=np.float64),
        np.ascontiguousarray(start, dtype=np.int64),
        np.ascontiguousarray(w, dtype=np.float64),
    )


def banded_rows(padded, start, w, impl=None):
    impl = impl or _impl
    return impl.banded_rows(*_prep(padded, start, w))


def banded_congruence(padded, sr, wr, sc, wc, impl=None):
    impl = impl or _impl
    padded, sr, wr = _prep(padded, sr, wr)
    sc = np.ascontiguousarray(sc, dtype=np.int64)
    wc = np.ascontiguousarray(wc, dtype=np.float64)
    return impl.banded_congruence(padded, sr, wr, sc, wc)
