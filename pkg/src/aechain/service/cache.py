"""Persistent verdict cache: append-only JSONL log plus in-memory index.

Interrupted runs resume without re-scoring; the log is replayed on startup
and later entries win (values are deterministic, so replays agree anyway).
"""

from __future__ import annotations

import json
import threading
from pathlib import Path


class VerdictCache:
    def __init__(self, path: Path | str | None = None):
        self._path = Path(path) if path is not None else None
        self._index: dict[tuple[str, str], tuple[float, bool]] = {}
        self._lock = threading.Lock()
        if self._path is not None and self._path.exists():
            with open(self._path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    doc = json.loads(line)
                    key = (doc["detector_id"], doc["digest"])
                    self._index[key] = (float(doc["score"]), bool(doc["label"]))

    def __len__(self) -> int:
        return len(self._index)

    def get(self, detector_id: str, digest: str) -> tuple[float, bool] | None:
        return self._index.get((detector_id, digest))

    def put(self, detector_id: str, digest: str, score: float, label: bool) -> None:
        with self._lock:
            self._index[(detector_id, digest)] = (score, label)
            if self._path is not None:
                record = {"detector_id": detector_id, "digest": digest,
                          "score": score, "label": label}
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
