"""Deterministic seed derivation.

Every stochastic draw in the package flows through a generator produced
here. Seeds for sub-streams (per trial, per head count, per grid repeat)
are derived by hashing the parent seed together with the stream labels,
so results do not depend on iteration order or worker count, and the
same (seed, labels) tuple always yields the same stream on any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ValidationError

__all__ = ["derive_seed", "derive_rng"]


def derive_seed(*parts: int | str) -> int:
    """Hash ints and strings into a 128-bit seed.

    SHA-256 over a typed, length-unambiguous encoding of the parts;
    stable across processes and platforms (no dependence on Python's
    randomized string hashing).
    """
    if not parts:
        raise ValidationError("derive_seed needs at least one part")
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, bool):
            raise ValidationError("seed parts must be ints or strings, not bool")
        if isinstance(part, (int, np.integer)):
            encoded = str(int(part)).encode("ascii")
            digest.update(b"i" + str(len(encoded)).encode("ascii") + b":" + encoded)
        elif isinstance(part, str):
            encoded = part.encode("utf-8")
            digest.update(b"s" + str(len(encoded)).encode("ascii") + b":" + encoded)
        else:
            raise ValidationError(f"seed parts must be ints or strings, got {type(part).__name__}")
    return int.from_bytes(digest.digest()[:16], "little")


def derive_rng(*parts: int | str) -> np.random.Generator:
    """Generator seeded by derive_seed(*parts)."""
    return np.random.default_rng(np.random.SeedSequence(derive_seed(*parts)))
