"""The five attack generators behind one stage-oriented interface."""

from __future__ import annotations

from dataclasses import replace

from ..detectors.base import Detector
from .base import (
    GENERATOR_KINDS,
    KIND_FGSM,
    KIND_MAB,
    KIND_PARTIAL_DOS,
    KIND_POLICY,
    KIND_RANDOM,
    GeneratorConfig,
    GeneratorResult,
    PayloadPatch,
)
from .gradient import run_fgsm, run_partial_dos
from .mab import BanditState, run_mab
from .policy import (
    PolicyModel,
    PolicyTrainConfig,
    load_policy,
    run_trained_policy,
    save_policy,
    train_policy,
    uniform_policy,
)
from .random_agent import run_random

__all__ = [
    "AttackAgent",
    "BanditState",
    "GENERATOR_KINDS",
    "GeneratorConfig",
    "GeneratorResult",
    "KIND_FGSM",
    "KIND_MAB",
    "KIND_PARTIAL_DOS",
    "KIND_POLICY",
    "KIND_RANDOM",
    "PayloadPatch",
    "PolicyModel",
    "PolicyTrainConfig",
    "build_agent",
    "load_policy",
    "run_fgsm",
    "run_mab",
    "run_partial_dos",
    "run_random",
    "run_trained_policy",
    "save_policy",
    "train_policy",
    "uniform_policy",
]


class AttackAgent:
    """One generator bound to its target detector.

    start_stage resets any per-corpus-run shared state (the MAB posterior);
    run_sample derives its determinism entirely from the passed seed, so a
    stage is reproducible for any processing order that keeps sample order
    fixed where state is shared.
    """

    def __init__(self, gen_id: str, kind: str, target: Detector, cfg: GeneratorConfig,
                 policy: PolicyModel | None = None):
        if kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {kind!r}")
        if kind == KIND_POLICY and policy is None:
            raise ValueError("amg-policy agent needs a trained policy")
        self.gen_id = gen_id
        self.kind = kind
        self.target = target
        self.cfg = cfg
        self.policy = policy
        self.bandit: BanditState | None = None

    @property
    def sequential_only(self) -> bool:
        """True when per-sample runs mutate shared state and must stay ordered."""
        return self.kind == KIND_MAB

    def clone(self) -> "AttackAgent":
        """Independent agent with the same binding; shared state starts fresh."""
        return AttackAgent(self.gen_id, self.kind, self.target, self.cfg, policy=self.policy)

    def start_stage(self) -> None:
        if self.kind == KIND_MAB:
            self.bandit = BanditState()

    def run_sample(self, data: bytes, seed: int, source_id: str = "") -> GeneratorResult:
        cfg = replace(self.cfg, kind=self.kind, seed=seed)
        if self.kind == KIND_RANDOM:
            return run_random(data, self.target, cfg, source_id=source_id)
        if self.kind == KIND_POLICY:
            return run_trained_policy(data, self.target, cfg, self.policy, source_id=source_id)
        if self.kind == KIND_MAB:
            if self.bandit is None:
                self.bandit = BanditState()
            return run_mab(data, self.target, cfg, state=self.bandit, source_id=source_id)
        if self.kind == KIND_FGSM:
            return run_fgsm(data, self.target, cfg, source_id=source_id)
        return run_partial_dos(data, self.target, cfg, source_id=source_id)


def build_agent(kind: str, target: Detector, cfg: GeneratorConfig | None = None,
                policy: PolicyModel | None = None, gen_id: str | None = None) -> AttackAgent:
    return AttackAgent(gen_id or kind, kind, target, cfg or GeneratorConfig(kind=kind),
                       policy=policy)
