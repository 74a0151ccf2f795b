"""Hot kernels: compiled Cython core with a pure-Python fallback.

The compiled module is used when it imports; set ``GPCLOGZ_PURE_PYTHON=1``
to force the fallback. Both expose the same names.
"""

import os

from . import _fallback

fallback = _fallback

if os.environ.get("GPCLOGZ_PURE_PYTHON", "") not in ("", "0"):
    active = _fallback
else:
    try:
        from . import _core as active
    except ImportError:  # extension not built
        active = _fallback

compiled = active if active is not _fallback else None

BACKEND = active.BACKEND
Workspace = active.Workspace
gibbs_sweeps = active.gibbs_sweeps
truncnorm = active.truncnorm


def get_backend(name: str | None = None):
    """Return the kernel module called ``name`` ("cython" or "python"), default the active one."""
    if name is None:
        return active
    if name == "python":
        return _fallback
    if name == "cython":
        if compiled is None:
            raise ImportError("compiled kernels are not available")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
