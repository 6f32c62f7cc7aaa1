"""Kernel backend selection.

The compiled extension is used when importable; set ``TRAILCAST_BACKEND=python``
to force the reference kernels.
"""
import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("TRAILCAST_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as kernels  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("cython", "python") or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
