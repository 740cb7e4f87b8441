"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``TEMPLE_PURE_PYTHON=1``
forces the pure-Python fallback (useful for debugging and for the benchmark).
"""
from __future__ import annotations

import os

from . import _pykernels
from ._pykernels import (  # noqa: F401  re-exported slot names
    CUM_REWARD,
    DISC_FACTOR,
    DISC_RETURN,
    DONE,
    EPISODE,
    EVENT,
    EVENT_A,
    EVENT_S,
    GLOBAL_STEP,
    MS_PAIRS,
    STATE,
    STEPS_TO_MS,
    T,
    UNKNOWN_VISITS,
)

_ckernels = None
if os.environ.get("TEMPLE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on the build
        _ckernels = None

_impl = _ckernels if _ckernels is not None else _pykernels
BACKEND = "cython" if _ckernels is not None else "python"

bellman_sweeps = _impl.bellman_sweeps
advance = _impl.advance


def get_backend(name: str):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not available")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
