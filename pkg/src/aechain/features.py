"""Fixed 270-value feature layout for the feature-space detector.

Layout (documented in docs/features.md, indexes inclusive):
    0..255   normalized byte histogram (sums to 1)
    256      whole-file Shannon entropy, bits per byte
    257      log2 of file size
    258      section count
    259      overlay size / file size
    260      mean section entropy
    261      max section entropy
    262      executable-section raw bytes / file size
    263      COFF timestamp bucket (timestamp >> 24)
    264      1.0 if the optional-header checksum is zero
    265      DOS-stub entropy (bytes 2..59 plus any stub program)
    266..269 reserved, always 0

Unparseable input degrades to the byte-level features (histogram, entropy,
log size) with the structural fields zeroed.
"""

from __future__ import annotations

import math

import numpy as np

from . import pe
from .errors import MalformedHeader, TruncatedSection

FEATURE_COUNT = 270

IDX_ENTROPY = 256
IDX_LOG_SIZE = 257
IDX_SECTION_COUNT = 258
IDX_OVERLAY_RATIO = 259
IDX_MEAN_SECTION_ENTROPY = 260
IDX_MAX_SECTION_ENTROPY = 261
IDX_EXEC_RATIO = 262
IDX_TIMESTAMP_BUCKET = 263
IDX_CHECKSUM_ZERO = 264
IDX_STUB_ENTROPY = 265


def byte_histogram(data: bytes) -> np.ndarray:
    """Normalized 256-bin histogram; uniform for empty input so it still sums to 1."""
    if not data:
        return np.full(256, 1.0 / 256.0)
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    return counts / float(len(data))


def shannon_entropy(data: bytes) -> float:
    """Entropy in bits per byte, 0.0 for empty input."""
    if not data:
        return 0.0
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / float(len(data))
    return float(-(p * np.log2(p)).sum())


def extract_features(data: bytes) -> np.ndarray:
    """Deterministic 270-value feature vector for raw bytes."""
    v = np.zeros(FEATURE_COUNT)
    v[0:256] = byte_histogram(data)
    v[IDX_ENTROPY] = shannon_entropy(data)
    v[IDX_LOG_SIZE] = math.log2(max(len(data), 1))

    try:
        img = pe.parse(data)
    except (MalformedHeader, TruncatedSection):
        return v

    v[IDX_SECTION_COUNT] = float(len(img.sections))
    if data:
        v[IDX_OVERLAY_RATIO] = len(img.overlay) / float(len(data))
        exec_bytes = sum(s.raw_size for s in img.sections if s.executable)
        v[IDX_EXEC_RATIO] = exec_bytes / float(len(data))
    if img.sections:
        entropies = [shannon_entropy(s.data) for s in img.sections]
        v[IDX_MEAN_SECTION_ENTROPY] = float(np.mean(entropies))
        v[IDX_MAX_SECTION_ENTROPY] = float(np.max(entropies))
    v[IDX_TIMESTAMP_BUCKET] = float((img.coff.timestamp >> 24) & 0xFF)
    checksum = img.optional.checksum
    v[IDX_CHECKSUM_ZERO] = 1.0 if checksum == 0 else 0.0
    v[IDX_STUB_ENTROPY] = shannon_entropy(img.dos.stub + img.dos.stub2)
    return v
