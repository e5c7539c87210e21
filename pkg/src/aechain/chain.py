"""Generator chaining: run G1, split by an independent oracle, feed the failed
set to G2, and measure combined evasion.

Stage-1 results are computed once per generator and shared across that
generator's whole matrix row (and its baseline), which makes the superset
property rate(G1->G2) >= rate(G1) an exact identity rather than a statistical
claim. The oracle is wrapped in a digest-keyed cache so each unique byte
string is scored once per run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from .detectors.base import CachedDetector, Detector
from .errors import AeChainError, EmptyAfterScreening, ZeroBaseline, ZeroTotal
from .generators import AttackAgent, GeneratorResult
from .rng import derive_seed, sha256_hex

SECOND_STAGE_AE = "ae"
SECOND_STAGE_GENUINE = "genuine"


def evasion_rate(misclassified: int, total: int) -> float:
    """misclassified / total * 100."""
    if total <= 0:
        raise ZeroTotal("evasion rate undefined for an empty sample set")
    return misclassified / total * 100.0


def relative_improvement(combined: float, baseline: float) -> float:
    """(combined - baseline) / baseline * 100."""
    if baseline <= 0:
        raise ZeroBaseline("relative improvement undefined for a zero baseline")
    return (combined - baseline) / baseline * 100.0


@dataclass(frozen=True)
class ImprovementStat:
    combined: float
    baseline: float

    @property
    def relative(self) -> float:
        return relative_improvement(self.combined, self.baseline)


@dataclass
class StageOutput:
    """One generator run on one sample; on error the input bytes pass through."""

    sample_id: str
    data: bytes
    evasive_vs_target: bool
    queries: int
    elapsed: float
    error: str | None = None
    result: GeneratorResult | None = None


@dataclass
class ChainOutcome:
    pair: tuple[str, str]
    oracle_id: str
    screened_out: list[str]
    evasive_1: list[str]
    evasive_2: list[str]
    failed_2: list[str]
    ae_digests: dict[str, str]
    failure_reasons: dict[str, str] = field(default_factory=dict)
    ae_bytes: dict[str, bytes] | None = None

    @property
    def total(self) -> int:
        return len(self.evasive_1) + len(self.evasive_2) + len(self.failed_2)

    @property
    def misclassified(self) -> int:
        return len(self.evasive_1) + len(self.evasive_2)

    def rate(self) -> float:
        return evasion_rate(self.misclassified, self.total)


OnResult = Callable[[str, str, StageOutput], None]


def screen_corpus(
    samples: list[tuple[str, bytes]], oracle: Detector
) -> tuple[list[tuple[str, bytes]], list[str]]:
    """Keep only samples the oracle flags malicious in genuine form."""
    kept: list[tuple[str, bytes]] = []
    screened_out: list[str] = []
    for sample_id, data in sorted(samples, key=lambda t: t[0]):
        if oracle.is_malicious(data):
            kept.append((sample_id, data))
        else:
            screened_out.append(sample_id)
    if not kept:
        raise EmptyAfterScreening("the oracle mispredicts every genuine sample")
    return kept, screened_out


def run_stage(
    agent: AttackAgent,
    inputs: list[tuple[str, bytes]],
    run_seed: int,
    stage_label: str,
    jobs: int = 1,
    on_result: OnResult | None = None,
) -> dict[str, StageOutput]:
    """Run one generator over the inputs, sorted by sample id.

    Per-sample seeds derive from (run_seed, stage_label, generator, sample id),
    so outputs are independent of worker count; agents with shared mutable
    state run sequentially regardless of jobs.
    """
    ordered = sorted(inputs, key=lambda t: t[0])
    agent.start_stage()

    def attack(item: tuple[str, bytes]) -> StageOutput:
        sample_id, data = item
        seed = derive_seed(run_seed, stage_label, agent.gen_id, sample_id)
        try:
            res = agent.run_sample(data, seed, source_id=sample_id)
        except AeChainError as exc:
            return StageOutput(
                sample_id=sample_id,
                data=data,
                evasive_vs_target=False,
                queries=0,
                elapsed=0.0,
                error=f"{type(exc).__name__}: {exc}",
            )
        return StageOutput(
            sample_id=sample_id,
            data=res.output,
            evasive_vs_target=res.evasive_vs_target,
            queries=res.target_queries,
            elapsed=res.elapsed,
            result=res,
        )

    if jobs > 1 and not agent.sequential_only:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(attack, ordered))
    else:
        outputs = [attack(item) for item in ordered]

    results: dict[str, StageOutput] = {}
    for out in outputs:
        results[out.sample_id] = out
        if on_result is not None:
            on_result(stage_label, agent.gen_id, out)
    return results


def _clone_agent(agent: AttackAgent) -> AttackAgent:
    return agent.clone()


def _split_by_oracle(
    stage: dict[str, StageOutput], oracle: Detector
) -> tuple[list[str], list[str]]:
    evasive: list[str] = []
    failed: list[str] = []
    for sample_id in sorted(stage):
        if oracle.is_malicious(stage[sample_id].data):
            failed.append(sample_id)
        else:
            evasive.append(sample_id)
    return evasive, failed


def _assemble_outcome(
    pair: tuple[str, str],
    oracle_id: str,
    screened_out: list[str],
    stage1: dict[str, StageOutput],
    stage2: dict[str, StageOutput],
    splits: tuple[list[str], list[str], list[str]],
    keep_ae_bytes: bool,
) -> ChainOutcome:
    evasive_1, evasive_2, failed_2 = splits
    final_bytes = {sid: stage1[sid].data for sid in evasive_1}
    final_bytes.update({sid: stage2[sid].data for sid in list(evasive_2) + list(failed_2)})
    reasons = {sid: out.error for sid, out in list(stage1.items()) + list(stage2.items()) if out.error}
    return ChainOutcome(
        pair=pair,
        oracle_id=oracle_id,
        screened_out=list(screened_out),
        evasive_1=evasive_1,
        evasive_2=evasive_2,
        failed_2=failed_2,
        ae_digests={sid: sha256_hex(b) for sid, b in final_bytes.items()},
        failure_reasons=reasons,
        ae_bytes=final_bytes if keep_ae_bytes else None,
    )


def _second_stage(
    genuine: dict[str, bytes],
    stage1: dict[str, StageOutput],
    failed_1: list[str],
    g2: AttackAgent,
    oracle: Detector,
    run_seed: int,
    stage_label: str,
    second_stage_input: str,
    jobs: int,
    on_result: OnResult | None,
) -> tuple[dict[str, StageOutput], list[str], list[str]]:
    if second_stage_input not in (SECOND_STAGE_AE, SECOND_STAGE_GENUINE):
        raise ValueError(f"unknown second-stage input mode {second_stage_input!r}")
    if not failed_1:
        return {}, [], []
    inputs = [
        (sid, stage1[sid].data if second_stage_input == SECOND_STAGE_AE else genuine[sid])
        for sid in failed_1
    ]
    stage2 = run_stage(g2, inputs, run_seed, stage_label, jobs=jobs, on_result=on_result)
    evasive_2, failed_2 = _split_by_oracle(stage2, oracle)
    return stage2, evasive_2, failed_2


def chain_pair(
    screened: list[tuple[str, bytes]],
    g1: AttackAgent,
    g2: AttackAgent,
    oracle: Detector,
    run_seed: int = 0,
    second_stage_input: str = SECOND_STAGE_AE,
    jobs: int = 1,
    on_result: OnResult | None = None,
    screened_out: list[str] | None = None,
    keep_ae_bytes: bool = True,
) -> ChainOutcome:
    """Run the two-stage chain for one (G1, G2) pair over a screened corpus."""
    if not isinstance(oracle, CachedDetector):
        oracle = CachedDetector(oracle)
    genuine = dict(screened)
    stage1 = run_stage(g1, screened, run_seed, "stage1", jobs=jobs, on_result=on_result)
    evasive_1, failed_1 = _split_by_oracle(stage1, oracle)
    stage2, evasive_2, failed_2 = _second_stage(
        genuine, stage1, failed_1, g2, oracle, run_seed,
        f"stage2:{g1.gen_id}", second_stage_input, jobs, on_result,
    )
    return _assemble_outcome(
        (g1.gen_id, g2.gen_id), oracle.detector_id, screened_out or [],
        stage1, stage2, (evasive_1, evasive_2, failed_2), keep_ae_bytes,
    )


@dataclass
class MatrixReport:
    """Evasion report for one oracle: baselines, the full pair matrix, stats."""

    oracle_id: str
    generator_ids: list[str]
    total: int
    baseline_counts: dict[str, int]
    cells: dict[tuple[str, str], ChainOutcome]

    def baseline_rate(self, gen_id: str) -> float:
        return evasion_rate(self.baseline_counts[gen_id], self.total)

    def cell_rate(self, g1: str, g2: str) -> float:
        return self.cells[(g1, g2)].rate()

    def matrix(self) -> dict[str, dict[str, float]]:
        return {
            g1: {g2: self.cell_rate(g1, g2) for g2 in self.generator_ids}
            for g1 in self.generator_ids
        }

    def relative_matrix(self) -> dict[str, dict[str, float | None]]:
        """Per-cell improvement over the row generator's baseline; None when undefined."""
        out: dict[str, dict[str, float | None]] = {}
        for g1 in self.generator_ids:
            base = self.baseline_rate(g1)
            row: dict[str, float | None] = {}
            for g2 in self.generator_ids:
                row[g2] = relative_improvement(self.cell_rate(g1, g2), base) if base > 0 else None
            out[g1] = row
        return out

    def stats(self) -> dict[str, dict[str, float] | None]:
        """Off-diagonal absolute and relative min/avg/max (Table-2 shape)."""
        absolute: list[float] = []
        relative: list[float] = []
        rel = self.relative_matrix()
        for g1 in self.generator_ids:
            for g2 in self.generator_ids:
                if g1 == g2:
                    continue
                absolute.append(self.cell_rate(g1, g2))
                if rel[g1][g2] is not None:
                    relative.append(rel[g1][g2])

        def agg(values: list[float]) -> dict[str, float] | None:
            if not values:
                return None
            return {"min": min(values), "avg": sum(values) / len(values), "max": max(values)}

        return {"absolute": agg(absolute), "relative": agg(relative)}


def pair_matrix(
    screened: list[tuple[str, bytes]],
    agents: list[AttackAgent],
    oracle: Detector,
    run_seed: int = 0,
    second_stage_input: str = SECOND_STAGE_AE,
    jobs: int = 1,
    on_result: OnResult | None = None,
    screened_out: list[str] | None = None,
) -> MatrixReport:
    """All G1 x G2 chains over one screened corpus and one oracle.

    Each generator's stage-1 pass runs once and is reused for its entire row,
    so every cell's evasive set is a superset of that row's baseline set.
    """
    if not agents:
        raise ValueError("pair_matrix needs at least one generator")
    if not isinstance(oracle, CachedDetector):
        oracle = CachedDetector(oracle)
    genuine = dict(screened)
    screened_out = screened_out or []

    stage1: dict[str, dict[str, StageOutput]] = {}
    splits1: dict[str, tuple[list[str], list[str]]] = {}
    for agent in agents:
        stage1[agent.gen_id] = run_stage(agent, screened, run_seed, "stage1",
                                         jobs=jobs, on_result=on_result)
        splits1[agent.gen_id] = _split_by_oracle(stage1[agent.gen_id], oracle)

    def run_cell(pair: tuple[AttackAgent, AttackAgent]) -> tuple[tuple[str, str], ChainOutcome]:
        g1, g2 = pair
        evasive_1, failed_1 = splits1[g1.gen_id]
        stage2, evasive_2, failed_2 = _second_stage(
            genuine, stage1[g1.gen_id], failed_1, g2, oracle, run_seed,
            f"stage2:{g1.gen_id}", second_stage_input, 1, on_result,
        )
        outcome = _assemble_outcome(
            (g1.gen_id, g2.gen_id), oracle.detector_id, screened_out,
            stage1[g1.gen_id], stage2, (evasive_1, evasive_2, failed_2),
            keep_ae_bytes=False,
        )
        return (g1.gen_id, g2.gen_id), outcome

    # Second stages parallelize across cells, never within one: each cell gets
    # its own fresh agent state and its outputs depend only on derived seeds.
    pairs = [(g1, _clone_agent(g2)) for g1 in agents for g2 in agents]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = dict(pool.map(run_cell, pairs))
    else:
        cells = dict(run_cell(p) for p in pairs)

    return MatrixReport(
        oracle_id=oracle.detector_id,
        generator_ids=[a.gen_id for a in agents],
        total=len(screened),
        baseline_counts={g: len(splits1[g][0]) for g in splits1},
        cells=cells,
    )
