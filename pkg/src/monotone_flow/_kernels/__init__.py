"""Hot-loop back ends.

The compiled extension is used when it imports; otherwise the pure-Python
twin is selected. ``MONOTONE_FLOW_PURE=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("MONOTONE_FLOW_PURE", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "compiled" if compiled_backend is not None else "python"

integrate_affine = backend.integrate_affine
dykstra = backend.dykstra

K_WHOLE = _pykernels.K_WHOLE
K_POINT = _pykernels.K_POINT
K_BALL = _pykernels.K_BALL
K_BOX = _pykernels.K_BOX
K_HALFSPACE = _pykernels.K_HALFSPACE

__all__ = [
    "BACKEND_NAME",
    "backend",
    "compiled_backend",
    "python_backend",
    "integrate_affine",
    "dykstra",
]
