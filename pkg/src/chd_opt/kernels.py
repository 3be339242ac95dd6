"""Kernel backend selection.

The compiled extension ``chd_opt._kernels`` is used when it imports; set
``CHD_OPT_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from chd_opt import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("CHD_OPT_PURE_PYTHON"):
    try:
        from chd_opt import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

laplacian = _impl.laplacian
gradient = _impl.gradient
divergence = _impl.divergence
varcoef_apply = _impl.varcoef_apply
varcoef_diagonal = _impl.varcoef_diagonal
pcg_varcoef = _impl.pcg_varcoef


def backends():
    """Return the available backend modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from chd_opt import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
