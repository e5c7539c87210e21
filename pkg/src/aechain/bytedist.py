"""Byte-content distributions for the synthetic corpus and the append actions.

The benign distribution is a fixed module-level constant so that transform
actions (which inject benign-looking bytes) agree with the corpus generator
without sharing configuration. Malicious marker 4-grams are derived from the
corpus seed, so each corpus carries its own signature set.
"""

from __future__ import annotations

import numpy as np

from .rng import make_rng

_BYTE_VALUES = np.arange(256, dtype=np.int64)


def _benign_probs() -> np.ndarray:
    # Text-and-zeros heavy profile: long zero runs, printable ASCII, sparse tail.
    w = np.full(256, 0.20, dtype=np.float64)
    w[0x00] = 52.0
    w[0x20] = 9.0
    for b in range(0x41, 0x5B):  # A-Z
        w[b] = 2.2
    for b in range(0x61, 0x7B):  # a-z
        w[b] = 3.4
    for b in range(0x30, 0x3A):  # 0-9
        w[b] = 1.4
    for b in (0x2C, 0x2E, 0x3A, 0x3B, 0x5F, 0x0A, 0x0D, 0x09):
        w[b] = 1.1
    w[0xFF] = 0.9
    w[0x90] = 0.05
    w[0xCC] = 0.05
    return w / w.sum()


def _malicious_probs() -> np.ndarray:
    # High-entropy packed profile with elevated opcode-like bytes.
    w = np.full(256, 1.0, dtype=np.float64)
    w[0x00] = 2.0
    w[0x90] = 6.0  # nop sled flavor
    w[0xCC] = 5.0
    w[0xE8] = 4.0
    w[0xEB] = 3.0
    w[0xFF] = 4.0
    w[0x8B] = 3.0
    for b in range(0x41, 0x7B):
        w[b] = 0.35
    return w / w.sum()


BENIGN_PROBS = _benign_probs()
MALICIOUS_PROBS = _malicious_probs()

_BENIGN_CDF = np.cumsum(BENIGN_PROBS)
_MALICIOUS_CDF = np.cumsum(MALICIOUS_PROBS)


def _sample(cdf: np.ndarray, rng: np.random.Generator, n: int) -> bytes:
    if n <= 0:
        return b""
    draws = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(draws, 255).astype(np.uint8).tobytes()


def sample_benign(rng: np.random.Generator, n: int) -> bytes:
    return _sample(_BENIGN_CDF, rng, n)


def sample_malicious(rng: np.random.Generator, n: int) -> bytes:
    return _sample(_MALICIOUS_CDF, rng, n)


def marker_set(corpus_seed: int, count: int = 16) -> list[bytes]:
    """Seeded set of distinct malicious-signature 4-grams."""
    rng = make_rng(corpus_seed, "markers")
    markers: list[bytes] = []
    seen: set[bytes] = set()
    while len(markers) < count:
        m = rng.integers(0, 256, size=4, dtype=np.int64).astype(np.uint8).tobytes()
        if m not in seen:
            seen.add(m)
            markers.append(m)
    return markers


def count_markers(data: bytes, markers: list[bytes]) -> int:
    return sum(data.count(m) for m in markers)
