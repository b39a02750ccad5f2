"""Kernel selection: compiled extension when built, numpy fallback otherwise.

Set ``RODFORCE_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and the cross-implementation tests).
"""

import os

from . import _kernels_py

if os.environ.get("RODFORCE_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

IMPLEMENTATION: str = _impl.IMPLEMENTATION
FOLD_EPS: float = _impl.FOLD_EPS
bend_state = _impl.bend_state
stretch_state = _impl.stretch_state

__all__ = ["IMPLEMENTATION", "FOLD_EPS", "bend_state", "stretch_state"]
