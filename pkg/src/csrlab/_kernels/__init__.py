"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
CSRLAB_BACKEND=numpy (or =cython) to force a choice before import.
"""

import os

from . import numpy_backend


def get_backend(name):
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}; expected 'cython' or 'numpy'")


_requested = os.environ.get("CSRLAB_BACKEND", "auto").strip().lower()
if _requested in ("", "auto"):
    try:
        from . import _core as _impl
    except ImportError:
        _impl = numpy_backend
else:
    _impl = get_backend(_requested)

backend_name = _impl.name
forward = _impl.forward
backward = _impl.backward
collab_ce = _impl.collab_ce
softmax_backward = _impl.softmax_backward
