"""Byte-level convolutional scorer with closed-form embedding gradients.

Architecture: 257-row embedding table (256 byte values + padding token),
16 width-8 convolution filters applied stride-8 over the embedded sequence,
global max pooling per filter, then a single dense unit with sigmoid output.
Inputs are truncated to 65,536 bytes; shorter inputs are conceptually padded
with the padding token out to the truncation length, which contributes one
constant activation per filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateCorpus, PositionOutOfRange
from .base import Detector
from .tree import sigmoid

TRUNC_DEFAULT = 65536
WINDOW = 8
EMBED_DIM = 8
FILTERS = 16
PAD_TOKEN = 256


class ByteEmbedModel(Detector):
    def __init__(
        self,
        embedding: np.ndarray,  # (257, 8)
        conv_w: np.ndarray,  # (64, 16), row index = offset_in_window * 8 + embed_dim
        conv_b: np.ndarray,  # (16,)
        dense_w: np.ndarray,  # (16,)
        dense_b: float,
        threshold: float = 0.5,
        detector_id: str = "byte-embed",
        trunc: int = TRUNC_DEFAULT,
    ):
        self.embedding = np.asarray(embedding, dtype=np.float64)
        self.conv_w = np.asarray(conv_w, dtype=np.float64)
        self.conv_b = np.asarray(conv_b, dtype=np.float64)
        self.dense_w = np.asarray(dense_w, dtype=np.float64)
        self.dense_b = float(dense_b)
        self.threshold = float(threshold)
        self.detector_id = detector_id
        self.trunc = int(trunc)

    # --- forward ---

    def _indices(self, data: bytes) -> np.ndarray:
        return np.frombuffer(data[: self.trunc], dtype=np.uint8)

    def _pad_activation(self) -> np.ndarray:
        window = np.tile(self.embedding[PAD_TOKEN], WINDOW)
        return window @ self.conv_w + self.conv_b

    def _real_activations(self, idx: np.ndarray) -> np.ndarray:
        """Activations of the ceil(len/8) windows that touch actual bytes."""
        n_windows = (len(idx) + WINDOW - 1) // WINDOW
        if n_windows == 0:
            return np.zeros((0, FILTERS))
        if len(idx) == n_windows * WINDOW:
            padded = idx
        else:
            buf = np.full(n_windows * WINDOW, PAD_TOKEN, dtype=np.int16)
            buf[: len(idx)] = idx
            padded = buf
        windows = self.embedding[padded].reshape(n_windows, WINDOW * EMBED_DIM)
        return windows @ self.conv_w + self.conv_b

    def _pooled(
        self, data: bytes, need_argmax: bool = True
    ) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
        """Per-filter max, argmax window index, and the raw activations.

        Pad windows beyond the file all share one constant activation; the
        argmax index for a pad-window winner is the first pad window.
        """
        idx = self._indices(data)
        acts = self._real_activations(idx)
        n_real = acts.shape[0]
        n_pad = self.trunc // WINDOW - n_real
        if n_real == 0:
            pad = self._pad_activation()
            return pad, np.zeros(FILTERS, dtype=np.int64), acts
        pooled = acts.max(axis=0)
        argmax = acts.argmax(axis=0) if need_argmax else None
        if n_pad > 0:
            pad = self._pad_activation()
            take_pad = pad > pooled
            pooled = np.where(take_pad, pad, pooled)
            if argmax is not None:
                argmax = np.where(take_pad, n_real, argmax)
        return pooled, argmax, acts

    def logit(self, data: bytes) -> float:
        pooled, _, _ = self._pooled(data, need_argmax=False)
        return float(pooled @ self.dense_w + self.dense_b)

    def _f32_weights(self):
        """float32 mirrors for the scoring fast path, refreshed when weights move."""
        key = id(self.embedding)
        cached = getattr(self, "_f32_cache", None)
        if cached is None or cached[0] != key:
            emb = self.embedding.astype(np.float32)
            conv_w = self.conv_w.astype(np.float32)
            conv_b = self.conv_b.astype(np.float32)
            pad_act = np.tile(emb[PAD_TOKEN], WINDOW) @ conv_w + conv_b
            cached = (key, emb, conv_w, conv_b, self.dense_w.astype(np.float32), pad_act)
            self._f32_cache = cached
        return cached[1:]

    def score_bytes(self, data: bytes) -> float:
        """Deterministic malicious probability; float32 arithmetic throughout."""
        emb, conv_w, conv_b, dense_w, pad_act = self._f32_weights()
        idx = self._indices(data)
        n_windows = (len(idx) + WINDOW - 1) // WINDOW
        if n_windows == 0:
            pooled = pad_act
        else:
            if len(idx) == n_windows * WINDOW:
                padded = idx
            else:
                buf = np.full(n_windows * WINDOW, PAD_TOKEN, dtype=np.int16)
                buf[: len(idx)] = idx
                padded = buf
            acts = emb[padded].reshape(n_windows, WINDOW * EMBED_DIM) @ conv_w
            acts += conv_b
            pooled = acts.max(axis=0)
            if n_windows < self.trunc // WINDOW:
                pooled = np.maximum(pooled, pad_act)
        z = float(pooled @ dense_w) + self.dense_b
        return float(sigmoid(z))


def malicious_loss(
    model: ByteEmbedModel,
    data: bytes,
    override_position: int | None = None,
    override_vector: np.ndarray | None = None,
) -> float:
    """-log p(malicious), optionally with one input position's embedding replaced.

    The override path recomputes the affected window from scratch; it is the
    forward half of the finite-difference gradient check.
    """
    if override_position is None:
        z = model.logit(data)
        return float(np.logaddexp(0.0, -z))

    pos = int(override_position)
    if not 0 <= pos < model.trunc:
        raise PositionOutOfRange(f"position {pos} outside [0, {model.trunc})")
    idx = model._indices(data)
    acts = model._real_activations(idx)
    n_real = acts.shape[0]
    total_windows = model.trunc // WINDOW
    w = pos // WINDOW

    tokens = np.full(WINDOW, PAD_TOKEN, dtype=np.int64)
    lo = w * WINDOW
    take = idx[lo : lo + WINDOW]
    tokens[: len(take)] = take
    vecs = model.embedding[tokens].copy()
    vecs[pos % WINDOW] = np.asarray(override_vector, dtype=np.float64)
    override_act = vecs.reshape(-1) @ model.conv_w + model.conv_b

    candidates = [override_act]
    if n_real > 0:
        if w < n_real:
            others = np.delete(acts, w, axis=0)
            if others.size:
                candidates.append(others.max(axis=0))
        else:
            candidates.append(acts.max(axis=0))
    n_pad_others = (total_windows - n_real) - (1 if w >= n_real else 0)
    if n_pad_others > 0:
        candidates.append(model._pad_activation())
    pooled = np.max(np.stack(candidates), axis=0)
    z = float(pooled @ model.dense_w + model.dense_b)
    return float(np.logaddexp(0.0, -z))


def embedding_gradient(model: ByteEmbedModel, data: bytes, positions: list[int]) -> np.ndarray:
    """d(malicious loss)/d(embedding vector) at each requested input position.

    Closed form: only positions inside an argmax window carry gradient; each
    contributes through the filters whose pooled maximum that window holds.
    """
    pooled, argmax, _ = model._pooled(data)
    for pos in positions:
        if not 0 <= int(pos) < model.trunc:
            raise PositionOutOfRange(f"position {pos} outside [0, {model.trunc})")

    z = float(pooled @ model.dense_w + model.dense_b)
    dz = sigmoid(z) - 1.0  # d softplus(-z) / dz
    dm = dz * model.dense_w  # (16,)
    kernel = model.conv_w.reshape(WINDOW, EMBED_DIM, FILTERS)

    grads = np.zeros((len(positions), EMBED_DIM))
    for i, pos in enumerate(positions):
        w = int(pos) // WINDOW
        active = argmax == w
        if active.any():
            grads[i] = kernel[int(pos) % WINDOW] @ (dm * active)
    return grads


@dataclass
class ByteTrainConfig:
    epochs: int = 6
    batch_size: int = 64
    learning_rate: float = 0.2
    momentum: float = 0.9
    seed: int = 0
    trunc: int = TRUNC_DEFAULT


def init_byte_model(cfg: ByteTrainConfig, detector_id: str = "byte-embed") -> ByteEmbedModel:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    return ByteEmbedModel(
        embedding=rng.normal(0.0, 0.1, size=(257, EMBED_DIM)),
        conv_w=rng.normal(0.0, np.sqrt(2.0 / (WINDOW * EMBED_DIM)), size=(WINDOW * EMBED_DIM, FILTERS)),
        conv_b=np.zeros(FILTERS),
        dense_w=np.zeros(FILTERS),  # zero-init dense: untrained model scores 0.5 everywhere
        dense_b=0.0,
        detector_id=detector_id,
        trunc=cfg.trunc,
    )


def _batch_forward(model: ByteEmbedModel, batch: list[np.ndarray]):
    """Vectorized forward over index arrays; returns probabilities plus the
    tensors the backward pass needs.

    Every sample gets one extra materialized all-pad window so the pooled
    argmax is exact even when the pad constant wins; that window is masked
    out for full-length samples, which have no pad windows.
    """
    b = len(batch)
    n_real = np.array([(len(x) + WINDOW - 1) // WINDOW for x in batch])
    wb = int(n_real.max()) + 1
    idx_mat = np.full((b, wb * WINDOW), PAD_TOKEN, dtype=np.int64)
    for i, x in enumerate(batch):
        idx_mat[i, : len(x)] = x
    windows = model.embedding[idx_mat].reshape(b, wb, WINDOW * EMBED_DIM)
    acts = windows @ model.conv_w + model.conv_b  # (b, wb, 16)
    full = np.array([len(x) >= model.trunc for x in batch])
    if full.any():
        acts[full, -1, :] = -np.inf
    pooled = acts.max(axis=1)
    argmax = acts.argmax(axis=1)
    z = pooled @ model.dense_w + model.dense_b
    return sigmoid(z), pooled, argmax, windows, idx_mat


def train_byte_model(
    samples: list[bytes],
    labels: list[bool] | np.ndarray,
    cfg: ByteTrainConfig | None = None,
    detector_id: str = "byte-embed",
) -> ByteEmbedModel:
    """Mini-batch SGD with momentum on cross-entropy; fixed-seed reproducible."""
    cfg = cfg or ByteTrainConfig()
    y_all = np.asarray(labels, dtype=np.float64)
    if np.unique(y_all).size < 2:
        raise DegenerateCorpus("training corpus has a single class")

    model = init_byte_model(cfg, detector_id=detector_id)
    index_arrays = [np.frombuffer(s[: cfg.trunc], dtype=np.uint8).astype(np.int64) for s in samples]
    rng = np.random.Generator(np.random.PCG64(cfg.seed + 1))

    vel = {
        "embedding": np.zeros_like(model.embedding),
        "conv_w": np.zeros_like(model.conv_w),
        "conv_b": np.zeros_like(model.conv_b),
        "dense_w": np.zeros_like(model.dense_w),
        "dense_b": 0.0,
    }

    for _ in range(cfg.epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(order), cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            batch = [index_arrays[i] for i in rows]
            y = y_all[rows]
            p, pooled, argmax, windows, idx_mat = _batch_forward(model, batch)

            bsz = len(rows)
            dz = (p - y) / bsz
            g_dense_w = pooled.T @ dz
            g_dense_b = float(dz.sum())
            dpool = np.outer(dz, model.dense_w)  # (b, 16)

            rows_ax = np.arange(bsz)[:, None]
            win_vecs = windows[rows_ax, argmax]  # (b, 16, 64)
            g_conv_w = np.einsum("bf,bfk->kf", dpool, win_vecs)
            g_conv_b = dpool.sum(axis=0)

            kernel = model.conv_w.reshape(WINDOW, EMBED_DIM, FILTERS)
            contrib = np.einsum("bf,ojf->bfoj", dpool, kernel)  # (b, 16, 8, 8)
            starts = argmax * WINDOW  # (b, 16)
            token_pos = starts[:, :, None] + np.arange(WINDOW)[None, None, :]
            tokens = idx_mat[np.arange(bsz)[:, None, None], token_pos]
            g_embed = np.zeros_like(model.embedding)
            np.add.at(g_embed, tokens.ravel(), contrib.reshape(-1, EMBED_DIM))

            for name, grad in (
                ("embedding", g_embed),
                ("conv_w", g_conv_w),
                ("conv_b", g_conv_b),
                ("dense_w", g_dense_w),
            ):
                vel[name] = cfg.momentum * vel[name] - cfg.learning_rate * grad
                setattr(model, name, getattr(model, name) + vel[name])
            vel["dense_b"] = cfg.momentum * vel["dense_b"] - cfg.learning_rate * g_dense_b
            model.dense_b += vel["dense_b"]

    return model
