"""Deterministic seed derivation.

Every stochastic component receives its own numpy Generator seeded from the
experiment seed plus a label path, so results do not depend on call order or
worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *labels: object) -> int:
    """Derive a stable 63-bit child seed from a root seed and a label path."""
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def make_rng(root: int, *labels: object) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root, *labels)))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
