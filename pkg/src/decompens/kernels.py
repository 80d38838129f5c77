"""Backend selection for the sifting kernels.

The compiled extension is preferred; the numpy fallback is used when it is
not built or when ``DECOMPENS_PURE_PYTHON`` is set to a truthy value.
"""
import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("DECOMPENS_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

extrema_indices = _impl.extrema_indices
zero_crossings = _impl.zero_crossings
akima_eval = _impl.akima_eval
linear_eval = _impl.linear_eval
emd_imfs = _impl.emd_imfs
cubic_eval = _pykernels.cubic_eval
mirror_knots = _pykernels.mirror_knots
spline_code = _pykernels.spline_code
spline_eval = _pykernels.spline_eval
SPLINE_CODES = {"akima": _pykernels.AKIMA, "cubic": _pykernels.CUBIC, "linear": _pykernels.LINEAR}

__all__ = ["BACKEND", "extrema_indices", "zero_crossings", "akima_eval", "linear_eval",
           "cubic_eval", "emd_imfs", "mirror_knots", "spline_code", "spline_eval",
           "SPLINE_CODES"]
