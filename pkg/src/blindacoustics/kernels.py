"""Kernel backend selection.

The compiled Cython kernels are used when importable; otherwise the numpy
fallback.  Set ``BLINDACOUSTICS_BACKEND=numpy`` to force the fallback.
"""
import logging
import os

from . import _fallback

log = logging.getLogger(__name__)


def _load():
    if os.environ.get("BLINDACOUSTICS_BACKEND", "").lower() in ("numpy", "python", "fallback"):
        return _fallback
    try:
        from . import _kernels
    except ImportError:
        log.debug("compiled kernels unavailable; using numpy fallback")
        return _fallback
    return _kernels


_backend = _load()
BACKEND = _backend.BACKEND
stencil_matvec = _backend.stencil_matvec
pcg = _backend.pcg


def available_backends() -> dict:
    """All importable kernel modules keyed by backend name."""
    out = {"numpy": _fallback}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
