"""Kernel backend selection.

The compiled extension is used when it imports; setting
``ISOCORNERS_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

NAME = "python"
kernels = _pykernels

if os.environ.get("ISOCORNERS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # pragma: no cover - depends on build
        pass
    else:
        kernels = _ckernels
        NAME = "cython"


def available() -> dict:
    """Mapping of backend name to kernel module for every importable backend."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:  # pragma: no cover
        return out
    out["cython"] = _ckernels
    return out
