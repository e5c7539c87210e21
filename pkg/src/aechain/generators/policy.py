"""Score-baseline policy-gradient agent over the action catalog.

A linear softmax policy conditioned on the 270-value feature vector, trained
with REINFORCE against a target detector: +1 reward on evasion, -0.01 per
applied action, exponential-moving-average baseline.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import pe
from ..actions import ACTION_KINDS, apply, draw_action
from ..detectors.base import Detector
from ..errors import DegenerateCorpus, InapplicableAction
from ..features import FEATURE_COUNT, extract_features
from ..rng import make_rng
from .base import GeneratorConfig, GeneratorResult, run_action_agent, _ATTEMPTS_PER_SLOT


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass
class PolicyModel:
    weights: np.ndarray  # (actions, features)
    bias: np.ndarray  # (actions,)
    feat_mean: np.ndarray
    feat_scale: np.ndarray

    def probs(self, feats: np.ndarray) -> np.ndarray:
        x = (feats - self.feat_mean) / self.feat_scale
        return _softmax(self.weights @ x + self.bias)


def uniform_policy() -> PolicyModel:
    return PolicyModel(
        weights=np.zeros((len(ACTION_KINDS), FEATURE_COUNT)),
        bias=np.zeros(len(ACTION_KINDS)),
        feat_mean=np.zeros(FEATURE_COUNT),
        feat_scale=np.ones(FEATURE_COUNT),
    )


@dataclass
class PolicyTrainConfig:
    episodes: int = 300
    learning_rate: float = 0.08
    baseline_momentum: float = 0.9
    step_penalty: float = 0.01
    evasion_reward: float = 1.0
    seed: int = 0


def train_policy(
    samples: list[bytes],
    target: Detector,
    cfg: PolicyTrainConfig | None = None,
    agent_cfg: GeneratorConfig | None = None,
) -> PolicyModel:
    """REINFORCE over training samples; zero episodes returns the uniform policy."""
    cfg = cfg or PolicyTrainConfig()
    agent_cfg = agent_cfg or GeneratorConfig(kind="amg-policy")
    if not samples:
        raise DegenerateCorpus("policy training needs at least one malicious sample")

    feats = np.array([extract_features(s) for s in samples])
    policy = uniform_policy()
    policy.feat_mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    policy.feat_scale = np.where(scale > 1e-9, scale, 1.0)

    rng = make_rng(cfg.seed, "policy-train")
    baseline = 0.0
    for _ in range(cfg.episodes):
        data = samples[int(rng.integers(0, len(samples)))]
        cap = int(len(data) * agent_cfg.size_cap_factor)
        img = pe.parse(data)
        work = data
        if target.score_bytes(work) < target.threshold:
            continue  # nothing to learn from an already-benign sample

        steps: list[tuple[np.ndarray, int]] = []  # (standardized features, action index)
        evaded = False
        applied = 0
        attempts = 0
        x = None  # recomputed only when the working bytes change
        while applied < agent_cfg.max_actions and attempts < agent_cfg.max_actions * _ATTEMPTS_PER_SLOT:
            attempts += 1
            if x is None:
                x = (extract_features(work) - policy.feat_mean) / policy.feat_scale
            p = _softmax(policy.weights @ x + policy.bias)
            a = int(rng.choice(len(ACTION_KINDS), p=p))
            action = draw_action(ACTION_KINDS[a], rng, img)
            try:
                img = apply(img, action, size_cap=cap)
            except InapplicableAction:
                continue
            applied += 1
            steps.append((x, a))
            work = pe.serialize(img)
            x = None
            if target.score_bytes(work) < target.threshold:
                evaded = True
                break

        if not steps:
            continue
        total = (cfg.evasion_reward if evaded else 0.0) - cfg.step_penalty * applied
        baseline = cfg.baseline_momentum * baseline + (1 - cfg.baseline_momentum) * total
        for t, (x, a) in enumerate(steps):
            ret = (cfg.evasion_reward if evaded else 0.0) - cfg.step_penalty * (applied - t)
            adv = ret - baseline
            p = _softmax(policy.weights @ x + policy.bias)
            grad_logits = -p
            grad_logits[a] += 1.0
            policy.weights += cfg.learning_rate * adv * np.outer(grad_logits, x)
            policy.bias += cfg.learning_rate * adv * grad_logits

    return policy


def run_trained_policy(data: bytes, target: Detector, cfg: GeneratorConfig,
                       policy: PolicyModel, source_id: str = "") -> GeneratorResult:
    """Action agent sampling kinds from the trained policy; budget as run_random."""
    memo: dict[str, object] = {"work": None, "probs": None}

    def pick(rng: np.random.Generator, work: bytes) -> int:
        if memo["work"] is not work:  # features change only when an action applies
            memo["work"] = work
            memo["probs"] = policy.probs(extract_features(work))
        return int(rng.choice(len(ACTION_KINDS), p=memo["probs"]))

    return run_action_agent(data, target, cfg, pick, source_id=source_id)


def save_policy(policy: PolicyModel, path: Path | str) -> None:
    def pack(a: np.ndarray) -> dict:
        arr = np.asarray(a, dtype="<f8")
        return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}

    doc = {
        "format": "aechain-policy",
        "version": 1,
        "weights": pack(policy.weights),
        "bias": pack(policy.bias),
        "feat_mean": pack(policy.feat_mean),
        "feat_scale": pack(policy.feat_scale),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_policy(path: Path | str) -> PolicyModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "aechain-policy" or doc.get("version") != 1:
        raise ValueError("not a recognized policy document")

    def unpack(d: dict) -> np.ndarray:
        return np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").reshape(d["shape"]).copy()

    return PolicyModel(
        weights=unpack(doc["weights"]),
        bias=unpack(doc["bias"]),
        feat_mean=unpack(doc["feat_mean"]),
        feat_scale=unpack(doc["feat_scale"]),
    )
