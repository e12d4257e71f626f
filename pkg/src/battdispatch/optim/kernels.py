"""Select the compiled simplex kernels when available, numpy otherwise.

Set ``BATTDISPATCH_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("BATTDISPATCH_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

price = _impl.price
ratio_test = _impl.ratio_test
ftran_etas = _impl.ftran_etas
btran_etas = _impl.btran_etas

BASIC = _pykernels.BASIC
AT_LOWER = _pykernels.AT_LOWER
AT_UPPER = _pykernels.AT_UPPER
FREE_ZERO = _pykernels.FREE_ZERO
FIXED = _pykernels.FIXED
