"""Two-phase multi-armed bandit agent: Thompson sampling plus trace minimization.

The agent is stateless with respect to action order: arms are action kinds
with Beta(1,1) priors, shared across one corpus run. An episode applies up to
mab_steps sampled actions from the genuine bytes; on evasion the trace is
minimized against the target and surviving/removed arms are credited; on
failure the next episode restarts from the genuine bytes, up to mab_episodes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import pe
from ..actions import ACTION_KINDS, ActionTrace, apply, draw_action, minimize, replay
from ..detectors.base import CountingDetector, Detector
from ..errors import InapplicableAction
from ..rng import make_rng
from .base import GeneratorConfig, GeneratorResult, _ATTEMPTS_PER_SLOT


@dataclass
class BanditState:
    alpha: np.ndarray = field(default_factory=lambda: np.ones(len(ACTION_KINDS)))
    beta: np.ndarray = field(default_factory=lambda: np.ones(len(ACTION_KINDS)))

    def sample_arm(self, rng: np.random.Generator) -> int:
        return int(np.argmax(rng.beta(self.alpha, self.beta)))

    def credit_success(self, arm: int) -> None:
        self.alpha[arm] += 1.0

    def credit_failure(self, arm: int) -> None:
        self.beta[arm] += 1.0

    def pulls_recorded(self) -> float:
        """Total credited successes+failures across arms."""
        return float((self.alpha - 1.0).sum() + (self.beta - 1.0).sum())


def run_mab(data: bytes, target: Detector, cfg: GeneratorConfig,
            state: BanditState | None = None, source_id: str = "") -> GeneratorResult:
    started = time.perf_counter()
    state = state if state is not None else BanditState()
    counted = CountingDetector(target)
    rng = make_rng(cfg.seed, "mab")
    cap = int(len(data) * cfg.size_cap_factor)
    arm_index = {kind: i for i, kind in enumerate(ACTION_KINDS)}

    def evasive(b: bytes) -> bool:
        return counted.score_bytes(b) < target.threshold

    if evasive(data):
        return GeneratorResult(
            output=data,
            evasive_vs_target=True,
            trace=ActionTrace(source_id=source_id),
            target_queries=counted.calls,
            elapsed=time.perf_counter() - started,
        )

    last_bytes = data
    last_trace = ActionTrace(source_id=source_id)
    episodes = 0
    for _ in range(cfg.mab_episodes):
        episodes += 1
        img = pe.parse(data)
        trace = ActionTrace(source_id=source_id)
        work = data
        applied = 0
        attempts = 0
        while applied < cfg.mab_steps and attempts < cfg.mab_steps * _ATTEMPTS_PER_SLOT:
            attempts += 1
            arm = state.sample_arm(rng)
            action = draw_action(ACTION_KINDS[arm], rng, img)
            try:
                img = apply(img, action, size_cap=cap)
            except InapplicableAction:
                continue
            applied += 1
            trace.actions.append(action)
            work = pe.serialize(img)
            if evasive(work):
                minimized = minimize(data, trace, evasive, size_cap=cap)
                kept_ids = {id(a) for a in minimized.actions}
                for a in minimized.actions:
                    state.credit_success(arm_index[a.kind])
                for a in trace.actions:
                    if id(a) not in kept_ids:
                        state.credit_failure(arm_index[a.kind])
                output = replay(data, minimized, size_cap=cap)
                return GeneratorResult(
                    output=output,
                    evasive_vs_target=True,
                    trace=minimized,
                    target_queries=counted.calls,
                    elapsed=time.perf_counter() - started,
                    actions_applied=applied,
                    episodes=episodes,
                )
        last_bytes = work
        last_trace = trace

    return GeneratorResult(
        output=last_bytes,
        evasive_vs_target=False,
        trace=last_trace,
        target_queries=counted.calls,
        elapsed=time.perf_counter() - started,
        actions_applied=len(last_trace.actions),
        episodes=episodes,
    )
