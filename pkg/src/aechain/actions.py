"""Catalog of functionality-preserving binary transformations.

Each action's random content is fully determined by the seed stored in its
params, so a recorded trace replays byte-exactly and any subsequence of it is
still well defined (minimization relies on both).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import pe
from .bytedist import sample_benign
from .errors import InapplicableAction
from .rng import make_rng

APPEND_OVERLAY = "AppendOverlay"
ADD_SECTION = "AddSection"
RENAME_SECTION = "RenameSection"
PAD_SECTION_SLACK = "PadSectionSlack"
SET_TIMESTAMP = "SetTimestamp"
ZERO_CHECKSUM = "ZeroChecksum"
PERTURB_DOS_STUB = "PerturbDosStub"
APPEND_BENIGN_BYTES = "AppendBenignBytes"

# Fixed order: bandit arms and policy logits index into this tuple.
ACTION_KINDS: tuple[str, ...] = (
    APPEND_OVERLAY,
    ADD_SECTION,
    RENAME_SECTION,
    PAD_SECTION_SLACK,
    SET_TIMESTAMP,
    ZERO_CHECKSUM,
    PERTURB_DOS_STUB,
    APPEND_BENIGN_BYTES,
)

MAX_APPEND = 65536

_SECTION_NAMES = (".text", ".rdata", ".data", ".rsrc", ".reloc", ".idata", ".newx", ".pad0")

# Timestamps sampled from a plausible build-date window (2015-01-01 .. 2023-01-01).
_TS_LO = 1420070400
_TS_HI = 1672531200


@dataclass(frozen=True)
class Action:
    kind: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "params": self.params}, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "Action":
        doc = json.loads(line)
        return Action(kind=doc["kind"], params=doc["params"])


@dataclass
class ActionTrace:
    source_id: str
    actions: list[Action] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    def save_jsonl(self, path: Path | str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for a in self.actions:
                doc = {"sample_id": self.source_id, "kind": a.kind, "params": a.params}
                fh.write(json.dumps(doc, sort_keys=True) + "\n")

    @staticmethod
    def load_jsonl(path: Path | str) -> "ActionTrace":
        actions: list[Action] = []
        source_id = ""
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                source_id = doc.get("sample_id", source_id)
                actions.append(Action(kind=doc["kind"], params=doc["params"]))
        return ActionTrace(source_id=source_id, actions=actions)


def _check_length(length: int) -> int:
    if not 1 <= length <= MAX_APPEND:
        raise InapplicableAction(f"append length {length} outside [1, {MAX_APPEND}]")
    return length


def _random_bytes(seed: int, n: int) -> bytes:
    return make_rng(seed, "raw").integers(0, 256, size=n, dtype=np.int64).astype(np.uint8).tobytes()


def serialized_size(img: pe.PeImage) -> int:
    """File length serialize(img) would produce, without building the buffer."""
    header = img.header_size()
    extent_end = max(
        (s.raw_offset + s.raw_size for s in img.sections if s.raw_size), default=header
    )
    return max(header, extent_end) + len(img.overlay)


def apply(img: pe.PeImage, action: Action, size_cap: int | None = None) -> pe.PeImage:
    """Apply one action to an image, returning a new image.

    Raises InapplicableAction when the action does not fit this image or would
    push the serialized size past size_cap; callers treat that as a no-op.
    """
    p = action.params
    if action.kind == APPEND_OVERLAY:
        n = _check_length(int(p["length"]))
        out = pe.append_overlay(img, _random_bytes(int(p["seed"]), n))
    elif action.kind == ADD_SECTION:
        n = _check_length(int(p["length"]))
        content = sample_benign(make_rng(int(p["seed"]), "section"), n)
        name = str(p["name"]).encode("ascii", "replace")
        flags = pe.SCN_CNT_INITIALIZED_DATA | pe.SCN_MEM_READ
        out = pe.add_section(img, name, content, flags)
    elif action.kind == RENAME_SECTION:
        out = pe.with_renamed_section(img, int(p["index"]), str(p["name"]).encode("ascii", "replace"))
    elif action.kind == PAD_SECTION_SLACK:
        index = int(p["index"])
        if not 0 <= index < len(img.sections):
            raise InapplicableAction(f"no section at index {index}")
        s = img.sections[index]
        slack = s.raw_size - min(s.virtual_size, s.raw_size)
        fill = sample_benign(make_rng(int(p["seed"]), "slack"), max(slack, 0))
        out = pe.with_section_slack(img, index, fill)
    elif action.kind == SET_TIMESTAMP:
        out = pe.with_timestamp(img, int(p["value"]))
    elif action.kind == ZERO_CHECKSUM:
        out = pe.with_checksum(img, 0)
    elif action.kind == PERTURB_DOS_STUB:
        out = pe.with_dos_stub(img, _random_bytes(int(p["seed"]), 58))
    elif action.kind == APPEND_BENIGN_BYTES:
        n = _check_length(int(p["length"]))
        out = pe.append_overlay(img, sample_benign(make_rng(int(p["seed"]), "benign"), n))
    else:
        raise InapplicableAction(f"unknown action kind {action.kind!r}")

    if size_cap is not None and serialized_size(out) > size_cap:
        raise InapplicableAction(f"output would exceed the size cap of {size_cap} bytes")
    return out


def draw_action(kind: str, rng: np.random.Generator, img: pe.PeImage) -> Action:
    """Sample concrete params for an action kind against the given image."""
    if kind == APPEND_OVERLAY:
        return Action(kind, {"length": int(rng.integers(64, 4097)), "seed": _seed(rng)})
    if kind == ADD_SECTION:
        name = _SECTION_NAMES[int(rng.integers(0, len(_SECTION_NAMES)))]
        return Action(kind, {"name": name, "length": int(rng.integers(256, 4097)), "seed": _seed(rng)})
    if kind == RENAME_SECTION:
        index = int(rng.integers(0, max(len(img.sections), 1)))
        name = _SECTION_NAMES[int(rng.integers(0, len(_SECTION_NAMES)))]
        return Action(kind, {"index": index, "name": name})
    if kind == PAD_SECTION_SLACK:
        index = int(rng.integers(0, max(len(img.sections), 1)))
        return Action(kind, {"index": index, "seed": _seed(rng)})
    if kind == SET_TIMESTAMP:
        return Action(kind, {"value": int(rng.integers(_TS_LO, _TS_HI))})
    if kind == ZERO_CHECKSUM:
        return Action(kind, {})
    if kind == PERTURB_DOS_STUB:
        return Action(kind, {"seed": _seed(rng)})
    if kind == APPEND_BENIGN_BYTES:
        return Action(kind, {"length": int(rng.integers(512, 8193)), "seed": _seed(rng)})
    raise InapplicableAction(f"unknown action kind {kind!r}")


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**62))


def replay(data: bytes, trace: ActionTrace, size_cap: int | None = None) -> bytes:
    """Re-run a trace against raw bytes; inapplicable entries are skipped."""
    img = pe.parse(data)
    for action in trace.actions:
        try:
            img = apply(img, action, size_cap=size_cap)
        except InapplicableAction:
            continue
    return pe.serialize(img)


def minimize(
    data: bytes,
    trace: ActionTrace,
    is_evasive: Callable[[bytes], bool],
    size_cap: int | None = None,
) -> ActionTrace:
    """Greedy single-pass trace minimization.

    Walks the actions in order and drops each one whose removal keeps the
    replayed bytes evasive. The result is a subsequence of the input trace and
    always satisfies the predicate (given the input trace did).
    """
    kept = list(trace.actions)
    for action in list(kept):
        candidate = [a for a in kept if a is not action]
        if is_evasive(replay(data, ActionTrace(trace.source_id, candidate), size_cap=size_cap)):
            kept = candidate
    return ActionTrace(source_id=trace.source_id, actions=kept)
