"""Backend selection for the model's hot kernels.

Two interchangeable backends implement the same kernel contracts:

* ``numba`` - @njit-compiled loops (default when numba imports cleanly)
* ``numpy`` - pure-numpy reference implementations

The env var ``FEDAUDIO_SIM_BACKEND`` selects one ("numba" or "numpy"). It is
read on every dispatch, so tests and benchmarks can switch backends without
re-importing. ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os
import warnings

from . import _numpy

_ENV_VAR = "FEDAUDIO_SIM_BACKEND"
_backends = {"numpy": _numpy}
_numba_error = None

try:
    from . import _numba

    _backends["numba"] = _numba
except ImportError as e:  # pragma: no cover - depends on environment
    _numba_error = e


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_backends))


def get_ops(name: str | None = None):
    """Return the kernel module for ``name`` (default: env var, then numba)."""
    if name is None:
        name = os.environ.get(_ENV_VAR, "").strip().lower() or "numba"
    if name == "numba" and "numba" not in _backends:
        warnings.warn(
            f"numba backend unavailable ({_numba_error}); falling back to numpy",
            RuntimeWarning,
            stacklevel=2,
        )
        name = "numpy"
    if name not in _backends:
        raise ValueError(
            f"unknown kernel backend {name!r}; choose one of {available_backends()}"
        )
    return _backends[name]
