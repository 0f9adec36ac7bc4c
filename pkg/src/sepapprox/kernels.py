"""Kernel selection: the compiled extension if it imports, else NumPy.

Set ``SEPAPPROX_PURE_PYTHON=1`` to force the NumPy implementations.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("SEPAPPROX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

interp_gamma = _impl.interp_gamma
rational_correction = _impl.rational_correction
holder_means = _impl.holder_means
