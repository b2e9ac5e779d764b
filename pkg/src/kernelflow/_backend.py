"""Pick the compiled inner loops when available, else the numpy fallback.

Set KERNELFLOW_PURE=1 to force the fallback.
"""

import os

from . import _core_py

core = _core_py
NAME = "python"

if not os.environ.get("KERNELFLOW_PURE"):
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        pass
    else:
        core = _compiled
        NAME = "cython"
