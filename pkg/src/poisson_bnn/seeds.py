"""Named seed derivation so every stage draws from its own reproducible stream."""

import hashlib

import numpy as np


def derive_seed(seed: int, *names) -> int:
    """64-bit seed from a run seed and a path of stage names / indices.

    Uses SHA-256 of the joined path, so the mapping is stable across
    processes and Python versions (unlike ``hash``).
    """
    key = ":".join([str(int(seed))] + [str(n) for n in names]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def rng_for(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))
