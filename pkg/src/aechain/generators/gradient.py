"""White-box gradient attacks on the byte-embedding model.

Both attacks share one loop: seed the mutable byte region from the benign
distribution, then repeat ascent steps on the malicious loss in embedding
space (epsilon * sign of the closed-form gradient), mapping the accumulated
embeddings back to the nearest table rows after every step. FGSM appends an
overlay payload; Partial DOS rewrites DOS-header offsets 2..59 in place.
"""

from __future__ import annotations

import time

import numpy as np

from ..bytedist import sample_benign
from ..detectors.base import CountingDetector, Detector
from ..detectors.bytenet import ByteEmbedModel, embedding_gradient
from ..errors import SkippedOutOfWindow
from ..rng import make_rng
from .base import GeneratorConfig, GeneratorResult, PayloadPatch

_DOS_LO = 2
_DOS_HI = 60  # e_lfanew at 60..63 stays untouched, as do the magic bytes 0..1


def _require_byte_model(target: Detector) -> ByteEmbedModel:
    inner = target
    if isinstance(inner, CountingDetector):
        inner = inner.inner
    if not isinstance(inner, ByteEmbedModel):
        raise TypeError(f"gradient attacks need a white-box byte model, got {type(inner).__name__}")
    return inner


def _nearest_bytes(model: ByteEmbedModel, vectors: np.ndarray) -> bytes:
    """Map embedding-space rows to the closest byte-value rows (pad excluded).

    Euclidean distance; ties resolve to the lowest byte value.
    """
    table = model.embedding[:256]
    sq = (table**2).sum(axis=1)
    dist = sq[None, :] - 2.0 * (vectors @ table.T)
    return np.argmin(dist, axis=1).astype(np.uint8).tobytes()


def _gradient_attack(
    data: bytes,
    target: Detector,
    model: ByteEmbedModel,
    positions: list[int],
    init: bytes,
    budget: int,
    epsilon: float,
) -> tuple[bytes, bool, int, int, list[float]]:
    """Shared iteration core; returns (output, evasive, iterations, queries, scores)."""
    counted = CountingDetector(target)
    lo, hi = positions[0], positions[-1] + 1

    def splice(region: bytes) -> bytes:
        return data[:lo] + region + data[hi:]

    work = splice(init)
    e_cont = model.embedding[np.frombuffer(init, dtype=np.uint8).astype(np.int64)].copy()
    scores: list[float] = []
    iterations = 0
    evasive = False
    for _ in range(budget):
        s = counted.score_bytes(work)
        scores.append(s)
        if s < target.threshold:
            evasive = True
            break
        grad = embedding_gradient(model, work, positions)
        e_cont += epsilon * np.sign(grad)
        iterations += 1
        work = splice(_nearest_bytes(model, e_cont))
    if not evasive:
        s = counted.score_bytes(work)
        scores.append(s)
        evasive = s < target.threshold
    return work, evasive, iterations, counted.calls, scores


def run_fgsm(data: bytes, target: Detector, cfg: GeneratorConfig,
             source_id: str = "") -> GeneratorResult:
    """Append a payload and perturb it in embedding space until evasion.

    Raises SkippedOutOfWindow when the payload cannot sit inside the model's
    truncation window.
    """
    started = time.perf_counter()
    model = _require_byte_model(target)
    if len(data) + cfg.payload_size > model.trunc:
        raise SkippedOutOfWindow(
            f"file of {len(data)} bytes leaves no room for a {cfg.payload_size}-byte payload "
            f"inside the {model.trunc}-byte window"
        )
    positions = list(range(len(data), len(data) + cfg.payload_size))
    init = sample_benign(make_rng(cfg.seed, "fgsm-payload"), cfg.payload_size)
    output, evasive, iterations, queries, scores = _gradient_attack(
        data, target, model, positions, init, cfg.fgsm_iterations, cfg.epsilon
    )
    return GeneratorResult(
        output=output,
        evasive_vs_target=evasive,
        trace=PayloadPatch.of("overlay-payload", len(data), output[len(data) :]),
        target_queries=queries,
        elapsed=time.perf_counter() - started,
        iterations=iterations,
        score_series=scores,
    )


def run_partial_dos(data: bytes, target: Detector, cfg: GeneratorConfig,
                    source_id: str = "") -> GeneratorResult:
    """Same loop as run_fgsm over file offsets 2..59; output length is unchanged."""
    started = time.perf_counter()
    model = _require_byte_model(target)
    positions = list(range(_DOS_LO, _DOS_HI))
    init = sample_benign(make_rng(cfg.seed, "dos-stub"), _DOS_HI - _DOS_LO)
    output, evasive, iterations, queries, scores = _gradient_attack(
        data, target, model, positions, init, cfg.partial_dos_rounds, cfg.epsilon
    )
    return GeneratorResult(
        output=output,
        evasive_vs_target=evasive,
        trace=PayloadPatch.of("dos-stub", _DOS_LO, output[_DOS_LO:_DOS_HI]),
        target_queries=queries,
        elapsed=time.perf_counter() - started,
        iterations=iterations,
        score_series=scores,
    )
