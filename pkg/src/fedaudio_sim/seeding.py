"""Deterministic seed derivation for independent RNG streams.

Every stochastic component of the harness draws from its own stream, derived
from a master seed plus a tuple of context tags (round index, client id,
attempt number, ...). Streams are therefore independent of scheduling order
and stable across runs.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def stable_seed(*parts: int | str) -> int:
    """Hash a tuple of ints/strings into a 63-bit seed.

    The same parts always give the same seed, regardless of platform or
    process. Strings are allowed so client ids (e.g. speaker keys) can tag a
    stream directly.
    """
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, (bool, np.bool_)):
            raise TypeError("bool seed parts are ambiguous; use int or str")
        if isinstance(p, (int, np.integer)):
            h.update(b"i" + int(p).to_bytes(16, "little", signed=True))
        elif isinstance(p, str):
            b = p.encode("utf-8")
            h.update(b"s" + len(b).to_bytes(4, "little") + b)
        else:
            raise TypeError(f"unsupported seed part type: {type(p).__name__}")
    return int.from_bytes(h.digest()[:8], "little") & _MASK63


def derived_rng(*parts: int | str) -> np.random.Generator:
    """A fresh Generator seeded by ``stable_seed(*parts)``."""
    return np.random.default_rng(stable_seed(*parts))
