"""Backend selection for the hot kernels.

The compiled extension :mod:`sgl._kernels` is used when it imports; otherwise
(or when ``SGL_BACKEND=python``) the numpy twins in :mod:`sgl._fallback` are
used.  ``BACKEND`` names the active implementation.
"""
from __future__ import annotations

import os

from . import _fallback

_choice = os.environ.get("SGL_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _fallback
        BACKEND = "python"

normal_block = _impl.normal_block
euler_affine = _impl.euler_affine
scalar_occupation = _impl.scalar_occupation

__all__ = ["BACKEND", "normal_block", "euler_affine", "scalar_occupation"]
