"""Kernel backend selection.

The compiled extension is used when importable; ``ADMCTL_KERNEL=python``
forces the numpy fallback and ``ADMCTL_KERNEL=cython`` makes a missing
extension an import error.
"""

import os

from . import _pykernels

_choice = os.environ.get("ADMCTL_KERNEL", "auto").lower()

if _choice == "python":
    _backend = _pykernels
else:
    try:
        from . import _ckernels as _backend
    except ImportError:
        if _choice == "cython":
            raise
        _backend = _pykernels

BACKEND = _backend.BACKEND
sweep = _backend.sweep
simulate = _backend.simulate
uniforms = _backend.uniforms


def available():
    """Names of the importable backends."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get(name):
    """Return a backend module by name (``"python"`` or ``"cython"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
