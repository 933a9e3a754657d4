"""Per-packet hot kernels.

The compiled ``_fastpath`` extension is used when it was built; otherwise the
pure-Python implementations in ``_purepy`` are used. Set ``AFX_PURE_PYTHON=1``
to force the fallback.
"""

import os

from . import _purepy
from ._purepy import SCAN_BAD_LENGTH, SCAN_BAD_VERSION, SCAN_OK

BACKEND = "python"

if os.environ.get("AFX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _fastpath as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _purepy
else:
    _impl = _purepy

scan_frames = _impl.scan_frames
first_match = _impl.first_match
bin_events = _impl.bin_events

__all__ = [
    "BACKEND",
    "SCAN_OK",
    "SCAN_BAD_VERSION",
    "SCAN_BAD_LENGTH",
    "scan_frames",
    "first_match",
    "bin_events",
]
