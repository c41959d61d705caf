"""Kernel backend selection.

By default the kernels in :mod:`codipas._kernels` run compiled with numba.
Set ``CODIPAS_DISABLE_NUMBA=1`` before import (or call :func:`set_backend`)
to run the same source as plain Python over numpy arrays.
"""

from __future__ import annotations

import importlib.util
import os
import sys
import types

from . import _kernels

_JITTED = (
    "rate",
    "softmax_into",
    "imitative_softmax_into",
    "draw_action",
    "player_step",
    "run_block",
    "logit_residual",
    "logit_direction",
    "logit_iterate",
    "_replicator_into",
    "_adjusted_into",
    "system_field",
    "_renormalize",
    "rk4_integrate",
)

_numba_module: types.ModuleType | None = None


def _flag_disabled() -> bool:
    return os.environ.get("CODIPAS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


def numba_available() -> bool:
    return importlib.util.find_spec("numba") is not None


def _load_numba_kernels() -> types.ModuleType:
    global _numba_module
    if _numba_module is None:
        import numba

        # A private copy of the module, so jitted functions resolve each other
        # through the copy's globals while the plain module stays pure Python.
        spec = importlib.util.spec_from_file_location("codipas._kernels_jit", _kernels.__file__)
        mod = importlib.util.module_from_spec(spec)
        # numba's on-disk cache re-imports the defining module by name
        sys.modules[spec.name] = mod
        spec.loader.exec_module(mod)
        for name in _JITTED:
            setattr(mod, name, numba.njit(cache=True)(getattr(mod, name)))
        _numba_module = mod
    return _numba_module


def get_kernels(backend: str) -> types.ModuleType:
    if backend == "numba":
        return _load_numba_kernels()
    if backend == "numpy":
        return _kernels
    raise ValueError(f"unknown backend {backend!r}; expected 'numba' or 'numpy'")


_backend = "numpy" if (_flag_disabled() or not numba_available()) else "numba"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    get_kernels(name)
    _backend = name


def kernels() -> types.ModuleType:
    return get_kernels(_backend)
