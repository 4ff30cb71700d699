"""Kernel backend selection: compiled extension when available, pure fallback.

``CODESIGN_KERNELS=pure`` forces the fallback; ``CODESIGN_KERNELS=compiled``
makes a missing extension an import error instead of a silent fallback.
"""
from __future__ import annotations

import os

_forced = os.environ.get("CODESIGN_KERNELS", "").strip().lower()

if _forced == "pure":
    from codesign._kernels import pure as _impl
elif _forced == "compiled":
    from codesign._kernels import _speedups as _impl  # type: ignore[no-redef]
else:
    try:
        from codesign._kernels import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        from codesign._kernels import pure as _impl

BACKEND = _impl.BACKEND
ParetoArchive = _impl.ParetoArchive
schedule_core = _impl.schedule_core
schedule_batch = _impl.schedule_batch
dominated_or_equal_mask = _impl.dominated_or_equal_mask
# fused controller step; the pure lane has no equivalent (numpy path instead)
PolicyCore = getattr(_impl, "PolicyCore", None)
