"""Deterministic seed derivation for nested, order-independent randomness."""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Derive a 64-bit seed from arbitrary key parts.

    Stable across processes, platforms and Python versions (unlike ``hash``),
    so any unit of work can be re-run in isolation and reproduce its stream.
    """
    key = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def spawn_rng(*parts) -> np.random.Generator:
    """A fresh generator seeded from ``stable_seed(*parts)``."""
    return np.random.default_rng(stable_seed(*parts))
