"""Kernel backend selection.

The hot inner loops (heat march, per-mode implicit march) exist twice: a
Cython extension and a pure numpy/scipy fallback. The compiled core is used
when importable; set PRANDTLIN_PURE=1 to force the fallback (used by the
benchmark and the backend-parity tests).
"""

import os

if os.environ.get("PRANDTLIN_PURE"):
    from . import _fallback as backend
else:
    try:
        from . import _core as backend  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as backend

BACKEND = backend.NAME
heat_march = backend.heat_march
mode_march = backend.mode_march


def get_backend(name: str | None = None):
    """Return a kernel module by name ('cython' or 'fallback'); default: active."""
    if name is None:
        return backend
    if name == "fallback":
        from . import _fallback

        return _fallback
    if name == "cython":
        from . import _core  # type: ignore[attr-defined]

        return _core
    raise ValueError(f"unknown backend {name!r}")
