from .base import (
    AverageDetector,
    CachedDetector,
    CountingDetector,
    Detector,
    Verdict,
    calibrate_threshold,
    evaluate_accuracy,
    score,
)
from .bytenet import ByteEmbedModel, ByteTrainConfig, embedding_gradient, train_byte_model
from .io import load_model, save_model
from .tree import TreeEnsembleModel, TreeTrainConfig, train_tree_ensemble

__all__ = [
    "AverageDetector",
    "ByteEmbedModel",
    "ByteTrainConfig",
    "CachedDetector",
    "CountingDetector",
    "Detector",
    "TreeEnsembleModel",
    "TreeTrainConfig",
    "Verdict",
    "calibrate_threshold",
    "embedding_gradient",
    "evaluate_accuracy",
    "load_model",
    "save_model",
    "score",
    "train_byte_model",
    "train_tree_ensemble",
]
