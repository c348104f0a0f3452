"""Deterministic, order-independent random streams.

Every stochastic decision in the pipeline derives its randomness from a
stable digest of (seed, context parts) rather than from a shared generator,
so results are identical for any worker count and any processing order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_digest(*parts: object) -> int:
    """128-bit integer digest of the string forms of ``parts``."""
    joined = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(joined.encode("utf-8")).digest()[:16], "big")


def unit_float(*parts: object) -> float:
    """Deterministic float in [0, 1) derived from ``parts``."""
    return (stable_digest(*parts) >> 64) / float(1 << 64)


def rng_for(*parts: object) -> np.random.Generator:
    """Fresh generator seeded from a stable digest of ``parts``."""
    return np.random.default_rng(np.random.SeedSequence(stable_digest(*parts)))
