"""Kernel backend selection.

The compiled extension is used when importable; set ``TOURMONITOR_NO_EXT=1``
to force the pure-Python implementations.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("TOURMONITOR_NO_EXT", "") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

point_in_rings = _impl.point_in_rings
points_in_rings = _impl.points_in_rings
phi_against = _impl.phi_against

__all__ = ["BACKEND", "point_in_rings", "points_in_rings", "phi_against"]
