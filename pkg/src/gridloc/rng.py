"""Counter-based random streams.

Every random draw in the simulator comes from a Philox generator keyed by
(seed, stream name, step), so each stream is reproducible on its own and
results do not depend on evaluation order. Per-cell texture uses a
stateless integer hash instead, which is cheaper than a generator per
cell.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, name: str, step: int = 0) -> np.random.Generator:
    digest = hashlib.blake2s(f"{seed}/{name}/{step}".encode(), digest_size=16).digest()
    key = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def cell_hash01(cx: np.ndarray, cy: np.ndarray, seed: int, salt: str) -> np.ndarray:
    """Deterministic uniform [0, 1) value per lattice cell."""
    base = int.from_bytes(
        hashlib.blake2s(f"{seed}/{salt}".encode(), digest_size=8).digest(), "little")
    with np.errstate(over="ignore"):
        a = np.asarray(cx, dtype=np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
        b = np.asarray(cy, dtype=np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
        h = _mix64(a ^ b ^ np.uint64(base))
    return h.astype(np.float64) / float(2 ** 64)
