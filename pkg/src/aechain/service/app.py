"""FastAPI verdict service wrapping the detector models.

Plays the submit-to-scanner role locally: POST /scan returns a verdict,
GET /detectors lists models, GET /stats reports counters. Verdicts are cached
by content digest (optionally persisted) and a global requests-per-second
limit returns 429 with Retry-After when exceeded.
"""

from __future__ import annotations

import base64
import binascii
import threading
import time
from collections import deque
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..detectors import Detector, load_model
from ..rng import sha256_hex
from .cache import VerdictCache
from .schemas import (
    DetectorInfo,
    DetectorsResponse,
    ErrorResponse,
    ScanRequest,
    ScanResponse,
    StatsResponse,
)


def load_detector_dir(models_dir: Path | str) -> dict[str, Detector]:
    """Load every *.json detector document in a directory, keyed by detector id."""
    detectors: dict[str, Detector] = {}
    for path in sorted(Path(models_dir).glob("*.json")):
        try:
            model = load_model(path)
        except (ValueError, KeyError):
            continue  # skip non-detector documents (policy, training report)
        detectors[model.detector_id] = model
    return detectors


class _RateLimiter:
    """Global sliding-window limit on requests per second; 0 disables."""

    def __init__(self, per_second: int):
        self.per_second = per_second
        self._events: deque[float] = deque()
        self._lock = threading.Lock()

    def allow(self) -> bool:
        if self.per_second <= 0:
            return True
        now = time.monotonic()
        with self._lock:
            while self._events and now - self._events[0] >= 1.0:
                self._events.popleft()
            if len(self._events) >= self.per_second:
                return False
            self._events.append(now)
            return True


def create_app(
    detectors: dict[str, Detector],
    cache_path: Path | str | None = None,
    rate_limit: int = 0,
) -> FastAPI:
    app = FastAPI(title="aechain scan service")
    cache = VerdictCache(cache_path)
    limiter = _RateLimiter(rate_limit)
    state = {"requests": 0, "scans_computed": 0, "cache_hits": 0, "rate_limited": 0}
    per_detector: dict[str, int] = {det_id: 0 for det_id in detectors}
    counters_lock = threading.Lock()

    def next_request_id() -> str:
        with counters_lock:
            state["requests"] += 1
            return f"r-{state['requests']:08d}"

    @app.post(
        "/scan",
        response_model=ScanResponse,
        responses={404: {"model": ErrorResponse}, 400: {"model": ErrorResponse},
                   429: {"model": ErrorResponse}},
    )
    def scan(req: ScanRequest):
        if not limiter.allow():
            with counters_lock:
                state["rate_limited"] += 1
            return JSONResponse(
                status_code=429,
                content={"detail": "rate limit exceeded"},
                headers={"Retry-After": "1"},
            )
        request_id = next_request_id()
        detector = detectors.get(req.detector_id)
        if detector is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"unknown detector {req.detector_id!r}"})

        data: bytes | None = None
        if req.content_b64 is not None:
            try:
                data = base64.b64decode(req.content_b64, validate=True)
            except binascii.Error:
                return JSONResponse(status_code=400, content={"detail": "invalid base64 content"})
            digest = sha256_hex(data)
            if req.digest is not None and req.digest != digest:
                return JSONResponse(status_code=400,
                                    content={"detail": "digest does not match content"})
        elif req.digest is not None:
            digest = req.digest
        else:
            return JSONResponse(status_code=400,
                                content={"detail": "either content_b64 or digest is required"})

        cached = cache.get(req.detector_id, digest)
        if cached is not None:
            score, label = cached
            with counters_lock:
                state["cache_hits"] += 1
                per_detector[req.detector_id] = per_detector.get(req.detector_id, 0) + 1
            return ScanResponse(
                request_id=request_id, detector_id=req.detector_id, digest=digest,
                score=score, label=label, threshold=detector.threshold, cache_hit=True,
            )

        if data is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"digest {digest} not in cache; submit content"})

        score = detector.score_bytes(data)
        label = bool(score >= detector.threshold)
        cache.put(req.detector_id, digest, score, label)
        with counters_lock:
            state["scans_computed"] += 1
            per_detector[req.detector_id] = per_detector.get(req.detector_id, 0) + 1
        return ScanResponse(
            request_id=request_id, detector_id=req.detector_id, digest=digest,
            score=score, label=label, threshold=detector.threshold, cache_hit=False,
        )

    @app.get("/detectors", response_model=DetectorsResponse)
    def list_detectors():
        return DetectorsResponse(
            detectors=[
                DetectorInfo(detector_id=det_id, threshold=det.threshold)
                for det_id, det in sorted(detectors.items())
            ]
        )

    @app.get("/stats", response_model=StatsResponse)
    def stats():
        with counters_lock:
            return StatsResponse(per_detector=dict(per_detector), **state)

    return app
