# FILE 1: rng.py
# Purpose: The one documented random stream (Philox-4x64) and seed derivation.
# Dependencies: numpy

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    """
    Returns a Generator over the counter-based Philox bit generator.
    Philox output depends only on (key, counter), so the stream is identical
    on every platform for a given seed.
    """
    return np.random.Generator(np.random.Philox(int(seed) & MASK64))


def derive_seed(seed: int, *parts) -> int:
    """seed XOR blake2b(':'.join(parts))[:8], read little-endian."""
    label = ":".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(label, digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & MASK64
