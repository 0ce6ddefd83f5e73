"""Kernel selection: compiled extension when available, numpy fallback otherwise.

Set HOGBACK_NO_EXT=1 to force the fallback (used by the kernel benchmark and
for debugging build problems).
"""

import os

from . import _hogfallback

if os.environ.get("HOGBACK_NO_EXT"):
    _impl = _hogfallback
    HAVE_EXT = False
else:
    try:
        from . import _hogcore as _impl  # type: ignore[no-redef]

        HAVE_EXT = True
    except ImportError:
        _impl = _hogfallback
        HAVE_EXT = False

bin_cells = _impl.bin_cells
