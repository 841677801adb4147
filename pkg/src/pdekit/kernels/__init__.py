"""Backend selection for the hot kernels.

The compiled Cython core is preferred; a numpy fallback with identical
signatures is used when the extension is missing. Set ``PDEKIT_BACKEND``
to ``python`` or ``compiled`` to force a choice (forcing ``compiled``
raises if the extension is unavailable).
"""
from __future__ import annotations

import os

from . import _fallback

_FORCE = os.environ.get("PDEKIT_BACKEND", "").strip().lower()

_compiled = None
if _FORCE != "python":
    try:
        from . import _core as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None
        if _FORCE == "compiled":
            raise ImportError(
                "PDEKIT_BACKEND=compiled but the pdekit.kernels._core extension "
                "is not built; run `pip install -e . --no-build-isolation`"
            )

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "compiled" if _compiled is not None else "python"

scan_forward = _impl.scan_forward
scan_backward = _impl.scan_backward
depthwise_conv2d_forward = _impl.depthwise_conv2d_forward
depthwise_conv2d_backward = _impl.depthwise_conv2d_backward


def available_backends() -> dict:
    """Name -> kernel module, for benchmarks comparing implementations."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
