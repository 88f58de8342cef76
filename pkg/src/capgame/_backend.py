"""Kernel backend selection.

Prefers the compiled extension and falls back to the NumPy implementation
when it is absent. Set ``CAPGAME_PURE_PYTHON=1`` to force the fallback
(used by the benchmark and the backend-parity tests).
"""
from __future__ import annotations

import os

from . import _kernels_py

_impl = _kernels_py
if not os.environ.get("CAPGAME_PURE_PYTHON"):
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        pass

waterfill = _impl.waterfill
dual_chunk = _impl.dual_chunk

BACKEND = "compiled" if _impl is not _kernels_py else "python"


def backend_name() -> str:
    return BACKEND
