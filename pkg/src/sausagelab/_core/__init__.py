"""Hot kernels: compiled Cython extension with a pure-Python fallback.

The backend is chosen at import time.  Set ``SAUSAGELAB_BACKEND=python``
to force the fallback.  Both expose the same functions and produce the
same walk samples for the same keys.
"""
import os

from . import _fallback as fallback

compiled = None
if os.environ.get("SAUSAGELAB_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

backend = compiled if compiled is not None else fallback
BACKEND = backend.NAME

__all__ = ["backend", "fallback", "compiled", "BACKEND"]
