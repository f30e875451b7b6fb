"""Kernel backend selection: compiled core if built, NumPy fallback otherwise.

Set ``STEPGATE_KERNELS=python`` to force the fallback, ``native`` to require
the compiled core (ImportError if absent). The two backends use different
random streams; results are deterministic per seed within a backend.
"""

from __future__ import annotations

import os

from . import _fallback

_requested = os.environ.get("STEPGATE_KERNELS", "auto").lower()

if _requested == "python":
    _impl = _fallback
    BACKEND = "python"
elif _requested == "native":
    from . import _native as _impl  # type: ignore[no-redef]

    BACKEND = "native"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

digamma = _impl.digamma
trigamma = _impl.trigamma
mc_tsr_products = _impl.mc_tsr_products

__all__ = ["BACKEND", "digamma", "trigamma", "mc_tsr_products", "_fallback"]
