"""Pick the kernel implementation at import time.

``SPARSADV_BACKEND=python`` forces the NumPy fallback, ``cython`` makes a
missing extension an error, and anything else (default ``auto``) prefers
the compiled module when it imports.
"""

import os

from . import _pykernels

_choice = os.environ.get("SPARSADV_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _pykernels

BACKEND = kernels.BACKEND


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
