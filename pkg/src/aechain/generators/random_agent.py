"""Random-choice action agent (untrained AMG variant)."""

from __future__ import annotations

from ..detectors.base import Detector
from .base import GeneratorConfig, GeneratorResult, run_action_agent, uniform_pick


def run_random(data: bytes, target: Detector, cfg: GeneratorConfig,
               source_id: str = "") -> GeneratorResult:
    """Uniformly sampled actions, at most cfg.max_actions applied."""
    return run_action_agent(data, target, cfg, uniform_pick, source_id=source_id)
