"""Deterministic RNG derivation.

All randomness flows through Philox4x64-10, a published counter-based
generator with pure integer state transitions, so identical (seed, purpose)
keys produce bit-identical streams on every platform and in any call order.
Streams are derived from structured keys rather than a shared evolving
generator, which makes suspended runs resumable without saving RNG state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _as_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode()).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"rng key parts must be int or str, got {type(part)!r}")


def rng_for(*key_parts) -> np.random.Generator:
    """Generator for a structured key, e.g. rng_for(seed, "shuffle", round)."""
    entropy = [_as_int(p) for p in key_parts]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_int(*key_parts) -> int:
    """Stable non-negative integer derived from a structured key (for APIs
    that take a single integer seed)."""
    h = hashlib.sha256()
    for part in key_parts:
        h.update(str(_as_int(part)).encode())
        h.update(b"|")
    return int.from_bytes(h.digest()[:8], "little") >> 1
