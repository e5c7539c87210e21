"""Shared generator contracts: config, result record, and the action-agent loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import pe
from ..actions import ACTION_KINDS, Action, ActionTrace, apply, draw_action
from ..detectors.base import CountingDetector, Detector
from ..errors import InapplicableAction
from ..rng import make_rng, sha256_hex

KIND_RANDOM = "amg-random"
KIND_POLICY = "amg-policy"
KIND_MAB = "mab"
KIND_FGSM = "fgsm"
KIND_PARTIAL_DOS = "partial-dos"

GENERATOR_KINDS = (KIND_RANDOM, KIND_POLICY, KIND_MAB, KIND_FGSM, KIND_PARTIAL_DOS)

MAX_PAYLOAD = 1000

# An agent may draw this many inapplicable actions per applied-action slot
# before giving up on the run; keeps degenerate policies from spinning.
_ATTEMPTS_PER_SLOT = 8


@dataclass
class GeneratorConfig:
    kind: str = KIND_RANDOM
    max_actions: int = 50  # amg-random / amg-policy budget
    mab_steps: int = 10  # per-episode change budget
    mab_episodes: int = 60
    fgsm_iterations: int = 100
    partial_dos_rounds: int = 100
    payload_size: int = 512
    epsilon: float = 0.05
    seed: int = 0
    size_cap_factor: float = 2.0  # emitted AE may grow to this multiple of its input

    def __post_init__(self) -> None:
        for name in ("max_actions", "mab_steps", "mab_episodes", "fgsm_iterations",
                     "partial_dos_rounds", "payload_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.payload_size > MAX_PAYLOAD:
            raise ValueError(f"payload_size {self.payload_size} exceeds {MAX_PAYLOAD}")


@dataclass(frozen=True)
class PayloadPatch:
    """Describes the byte region a gradient attack rewrote."""

    region: str  # "overlay-payload" | "dos-stub"
    offset: int
    length: int
    content_sha256: str

    @staticmethod
    def of(region: str, offset: int, content: bytes) -> "PayloadPatch":
        return PayloadPatch(region, offset, len(content), sha256_hex(content))


@dataclass
class GeneratorResult:
    output: bytes
    evasive_vs_target: bool
    trace: ActionTrace | PayloadPatch | None
    target_queries: int
    elapsed: float
    actions_applied: int = 0
    episodes: int = 0
    iterations: int = 0
    score_series: list[float] = field(default_factory=list)


def run_action_agent(
    data: bytes,
    target: Detector,
    cfg: GeneratorConfig,
    pick_kind: Callable[[np.random.Generator, bytes], int],
    source_id: str = "",
) -> GeneratorResult:
    """Apply actions one at a time until the target flips or the budget is spent.

    pick_kind chooses the next action-kind index; inapplicable draws are
    skipped and do not consume budget.
    """
    started = time.perf_counter()
    counted = CountingDetector(target)
    rng = make_rng(cfg.seed, "agent", cfg.kind)
    cap = int(len(data) * cfg.size_cap_factor)

    trace = ActionTrace(source_id=source_id)
    work_img = pe.parse(data)
    work = data
    evasive = counted.score_bytes(work) < target.threshold
    applied = 0
    attempts = 0
    max_attempts = cfg.max_actions * _ATTEMPTS_PER_SLOT
    while not evasive and applied < cfg.max_actions and attempts < max_attempts:
        attempts += 1
        kind = ACTION_KINDS[pick_kind(rng, work)]
        action = draw_action(kind, rng, work_img)
        try:
            work_img = apply(work_img, action, size_cap=cap)
        except InapplicableAction:
            continue
        applied += 1
        trace.actions.append(action)
        work = pe.serialize(work_img)
        evasive = counted.score_bytes(work) < target.threshold

    return GeneratorResult(
        output=work,
        evasive_vs_target=evasive,
        trace=trace,
        target_queries=counted.calls,
        elapsed=time.perf_counter() - started,
        actions_applied=applied,
    )


def uniform_pick(rng: np.random.Generator, _work: bytes) -> int:
    return int(rng.integers(0, len(ACTION_KINDS)))
