"""Wire schemas for the local verdict service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ScanRequest(BaseModel):
    detector_id: str
    content_b64: str | None = Field(default=None, description="base64 sample bytes")
    digest: str | None = Field(default=None, description="sha256 hex; enough on its own if previously scanned")


class ScanResponse(BaseModel):
    request_id: str
    detector_id: str
    digest: str
    score: float
    label: bool
    threshold: float
    cache_hit: bool


class DetectorInfo(BaseModel):
    detector_id: str
    threshold: float


class DetectorsResponse(BaseModel):
    detectors: list[DetectorInfo]


class StatsResponse(BaseModel):
    requests: int
    scans_computed: int
    cache_hits: int
    rate_limited: int
    per_detector: dict[str, int]


class ErrorResponse(BaseModel):
    detail: str
