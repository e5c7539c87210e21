"""Versioned JSON persistence for trained detectors.

Float arrays are stored as base64 little-endian 64-bit values; integer tree
structure stays as plain JSON lists.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .base import AverageDetector, Detector
from .bytenet import ByteEmbedModel
from .tree import RegressionTree, TreeEnsembleModel

FORMAT_NAME = "aechain-detector"
FORMAT_VERSION = 1


def _pack_f64(arr: np.ndarray) -> dict:
    a = np.asarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _unpack_f64(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(doc["shape"]).copy()


def model_to_doc(model: Detector) -> dict:
    doc: dict = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "detector_id": model.detector_id,
        "threshold": model.threshold,
    }
    if isinstance(model, TreeEnsembleModel):
        doc["kind"] = "tree_ensemble"
        doc["learning_rate"] = model.learning_rate
        doc["base_score"] = model.base_score
        doc["trees"] = [
            {
                "feature": t.feature.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "threshold": _pack_f64(t.threshold),
                "value": _pack_f64(t.value),
            }
            for t in model.trees
        ]
    elif isinstance(model, ByteEmbedModel):
        doc["kind"] = "byte_embed"
        doc["trunc"] = model.trunc
        doc["embedding"] = _pack_f64(model.embedding)
        doc["conv_w"] = _pack_f64(model.conv_w)
        doc["conv_b"] = _pack_f64(model.conv_b)
        doc["dense_w"] = _pack_f64(model.dense_w)
        doc["dense_b"] = model.dense_b
    elif isinstance(model, AverageDetector):
        doc["kind"] = "average"
        doc["components"] = [model_to_doc(c) for c in model.components]
    else:
        raise TypeError(f"cannot serialize detector of type {type(model).__name__}")
    return doc


def model_from_doc(doc: dict) -> Detector:
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"not a detector document: format={doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported detector document version {doc.get('version')!r}")
    kind = doc["kind"]
    if kind == "tree_ensemble":
        trees = [
            RegressionTree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=_unpack_f64(t["threshold"]),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                value=_unpack_f64(t["value"]),
            )
            for t in doc["trees"]
        ]
        return TreeEnsembleModel(
            trees=trees,
            learning_rate=doc["learning_rate"],
            base_score=doc["base_score"],
            threshold=doc["threshold"],
            detector_id=doc["detector_id"],
        )
    if kind == "byte_embed":
        return ByteEmbedModel(
            embedding=_unpack_f64(doc["embedding"]),
            conv_w=_unpack_f64(doc["conv_w"]),
            conv_b=_unpack_f64(doc["conv_b"]),
            dense_w=_unpack_f64(doc["dense_w"]),
            dense_b=doc["dense_b"],
            threshold=doc["threshold"],
            detector_id=doc["detector_id"],
            trunc=doc["trunc"],
        )
    if kind == "average":
        return AverageDetector(
            components=[model_from_doc(c) for c in doc["components"]],
            detector_id=doc["detector_id"],
            threshold=doc["threshold"],
        )
    raise ValueError(f"unknown detector kind {kind!r}")


def save_model(model: Detector, path: Path | str) -> None:
    Path(path).write_text(json.dumps(model_to_doc(model), sort_keys=True), encoding="utf-8")


def load_model(path: Path | str) -> Detector:
    return model_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))
