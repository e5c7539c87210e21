"""HTTP client adapter exposing a remote scan service as a Detector."""

from __future__ import annotations

import base64
import time

import httpx

from ..detectors.base import Detector
from ..errors import ProtocolError, Unreachable


class RemoteDetector(Detector):
    """Scores bytes by POSTing them to a scan service.

    Transient failures (connection errors, 5xx, 429) retry with capped
    exponential backoff; persistent failure raises Unreachable, a response
    the client cannot interpret raises ProtocolError.
    """

    def __init__(
        self,
        base_url: str,
        detector_id: str,
        max_retries: int = 3,
        backoff: float = 0.1,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.detector_id = detector_id
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout, transport=transport)
        self.threshold = self._fetch_threshold()

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                time.sleep(min(self.backoff * 2 ** (attempt - 1), 2.0))
            try:
                resp = self._client.request(method, path, **kwargs)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code in (429,) or resp.status_code >= 500:
                last_error = ProtocolError(f"{path} returned {resp.status_code}")
                continue
            return resp
        raise Unreachable(f"scan service unreachable after {self.max_retries} attempts: {last_error}")

    def _fetch_threshold(self) -> float:
        resp = self._request("GET", "/detectors")
        try:
            doc = resp.json()
            for entry in doc["detectors"]:
                if entry["detector_id"] == self.detector_id:
                    return float(entry["threshold"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed /detectors response: {exc}") from exc
        raise ProtocolError(f"service does not expose detector {self.detector_id!r}")

    def score_bytes(self, data: bytes) -> float:
        payload = {
            "detector_id": self.detector_id,
            "content_b64": base64.b64encode(data).decode("ascii"),
        }
        resp = self._request("POST", "/scan", json=payload)
        if resp.status_code != 200:
            raise ProtocolError(f"/scan returned {resp.status_code}: {resp.text[:200]}")
        try:
            doc = resp.json()
            return float(doc["score"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed /scan response: {exc}") from exc

    def close(self) -> None:
        self._client.close()


def remote_oracle(
    base_url: str,
    detector_id: str,
    max_retries: int = 3,
    backoff: float = 0.1,
    timeout: float = 30.0,
    transport: httpx.BaseTransport | None = None,
) -> RemoteDetector:
    """Detector-interface adapter for a remote scan service."""
    return RemoteDetector(
        base_url,
        detector_id,
        max_retries=max_retries,
        backoff=backoff,
        timeout=timeout,
        transport=transport,
    )
