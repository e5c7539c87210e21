"""Detector interface, verdicts, composition and threshold calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import sha256_hex


@dataclass(frozen=True)
class Verdict:
    score: float  # probability of malicious, in [0, 1]
    label: bool  # malicious iff score >= threshold
    detector_id: str
    threshold: float

    @staticmethod
    def from_score(score: float, detector_id: str, threshold: float) -> "Verdict":
        return Verdict(
            score=float(score),
            label=bool(score >= threshold),
            detector_id=detector_id,
            threshold=float(threshold),
        )


class Detector:
    """Scores raw bytes; concrete models define score_bytes."""

    detector_id: str = "detector"
    threshold: float = 0.5

    def score_bytes(self, data: bytes) -> float:
        raise NotImplementedError

    def verdict(self, data: bytes) -> Verdict:
        return Verdict.from_score(self.score_bytes(data), self.detector_id, self.threshold)

    def is_malicious(self, data: bytes) -> bool:
        return self.score_bytes(data) >= self.threshold


def score(model: Detector, data: bytes) -> Verdict:
    return model.verdict(data)


class AverageDetector(Detector):
    """Equal-weight score average over component detectors.

    Plays the independent-classifier role: its components are trained on data
    and seeds the attack targets never saw.
    """

    def __init__(self, components: list[Detector], detector_id: str, threshold: float = 0.5):
        self.components = list(components)
        self.detector_id = detector_id
        self.threshold = float(threshold)

    def score_bytes(self, data: bytes) -> float:
        return float(np.mean([c.score_bytes(data) for c in self.components]))


class CountingDetector(Detector):
    """Wrapper that counts score calls; used for query accounting."""

    def __init__(self, inner: Detector):
        self.inner = inner
        self.detector_id = inner.detector_id
        self.threshold = inner.threshold
        self.calls = 0

    def score_bytes(self, data: bytes) -> float:
        self.calls += 1
        return self.inner.score_bytes(data)


class CachedDetector(Detector):
    """Score cache keyed by content digest; each unique byte string is scored once."""

    def __init__(self, inner: Detector):
        self.inner = inner
        self.detector_id = inner.detector_id
        self.threshold = inner.threshold
        self._cache: dict[str, float] = {}
        self.hits = 0
        self.misses = 0

    def score_bytes(self, data: bytes) -> float:
        key = sha256_hex(data)
        if key in self._cache:
            self.hits += 1
            return self._cache[key]
        self.misses += 1
        value = self.inner.score_bytes(data)
        self._cache[key] = value
        return value


def calibrate_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold maximizing balanced accuracy under >= semantics.

    Every threshold inside one inter-score gap yields the same confusion
    matrix, so the maximizer is an interval; the midpoint of the first optimal
    interval is returned (maximum margin, deterministic).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pos = max(int(labels.sum()), 1)
    neg = max(int((~labels).sum()), 1)

    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    cum_pos = np.cumsum(sorted_labels)

    u = np.unique(scores)
    below = np.searchsorted(sorted_scores, u, side="left")
    pos_below = np.where(below > 0, cum_pos[np.maximum(below - 1, 0)], 0)
    tp = int(labels.sum()) - pos_below
    tn = below - pos_below
    bacc = 0.5 * (tp / pos + tn / neg)
    # one extra candidate above the maximum: predict everything benign
    bacc_all_benign = 0.5 * (0.0 + int((~labels).sum()) / neg)

    k = int(np.argmax(bacc))
    if bacc_all_benign > bacc[k]:
        return float(u[-1]) + 1.0
    lower = float(u[k - 1]) if k > 0 else 0.0
    return 0.5 * (lower + float(u[k]))


def evaluate_accuracy(model: Detector, samples: list[bytes], labels: list[bool]) -> float:
    hits = sum(1 for data, y in zip(samples, labels) if model.is_malicious(data) == bool(y))
    return hits / len(samples) if samples else 0.0
