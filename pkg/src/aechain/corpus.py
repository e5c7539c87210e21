"""Synthetic labeled executable corpus.

Benign and malicious samples differ in byte distribution, marker 4-gram
frequency, and header habits (timestamps, checksum, DOS stub), which makes
detection learnable and leaves evasion achievable through content dilution.
Labels are ground truth by construction. Four disjoint splits keep the two
oracle halves, the trained policy, and the evaluation set from ever sharing
samples.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pe
from .bytedist import marker_set, sample_benign, sample_malicious
from .errors import DigestMismatch, MissingFile
from .rng import derive_seed, make_rng, sha256_hex

MANIFEST_VERSION = 1

SPLIT_TRAIN_A = "train-detector-a"
SPLIT_TRAIN_B = "train-detector-b"
SPLIT_POLICY = "train-policy"
SPLIT_EVAL = "eval"

_DOS_TEXT = b"\x0e\x1f\xba\x0e\x00\xb4\x09\xcd\x21\xb8\x01\x4c\xcd\x21This program cannot be run in DOS mode.\r\n$"


@dataclass
class CorpusConfig:
    seed: int = 7
    train_a: tuple[int, int] = (500, 500)  # (malicious, benign)
    train_b: tuple[int, int] = (500, 500)
    train_policy: tuple[int, int] = (500, 500)
    eval_set: tuple[int, int] = (2000, 500)
    min_size: int = 4096
    max_size: int = 65536
    marker_count: int = 16

    def params_doc(self) -> dict:
        return {
            "train_a": list(self.train_a),
            "train_b": list(self.train_b),
            "train_policy": list(self.train_policy),
            "eval_set": list(self.eval_set),
            "min_size": self.min_size,
            "max_size": self.max_size,
            "marker_count": self.marker_count,
        }


@dataclass(frozen=True)
class SampleSpec:
    id: str
    path: str
    label: str  # "malicious" | "benign"
    seed: int
    split: str
    sha256: str
    size: int

    @property
    def is_malicious(self) -> bool:
        return self.label == "malicious"


@dataclass
class CorpusManifest:
    corpus_seed: int
    params: dict
    samples: list[SampleSpec] = field(default_factory=list)
    format_version: int = MANIFEST_VERSION

    def split(self, name: str) -> list[SampleSpec]:
        return [s for s in self.samples if s.split == name]

    def save(self, path: Path | str) -> None:
        doc = {
            "format_version": self.format_version,
            "corpus_seed": self.corpus_seed,
            "params": self.params,
            "samples": [vars(s) for s in self.samples],
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1), encoding="utf-8")

    @staticmethod
    def load(path: Path | str) -> "CorpusManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format_version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {doc.get('format_version')!r}")
        return CorpusManifest(
            corpus_seed=doc["corpus_seed"],
            params=doc["params"],
            samples=[SampleSpec(**s) for s in doc["samples"]],
            format_version=doc["format_version"],
        )


@dataclass
class Sample:
    spec: SampleSpec
    data: bytes

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def is_malicious(self) -> bool:
        return self.spec.is_malicious


def _optional_header(rng: np.random.Generator, entry: int, code_size: int, data_size: int,
                     image_size: int, headers_size: int, checksum: int) -> bytes:
    buf = bytearray(96)
    struct.pack_into("<H", buf, 0, pe.PE32_MAGIC)
    buf[2] = 14  # linker major
    struct.pack_into("<III", buf, 4, code_size, data_size, 0)
    struct.pack_into("<II", buf, 16, entry, pe.SECTION_ALIGN)
    struct.pack_into("<I", buf, 24, 2 * pe.SECTION_ALIGN)
    struct.pack_into("<I", buf, 28, 0x400000)
    struct.pack_into("<II", buf, 32, pe.SECTION_ALIGN, pe.FILE_ALIGN)
    struct.pack_into("<HH", buf, 40, 6, 0)  # OS version
    struct.pack_into("<HH", buf, 48, 6, 0)  # subsystem version
    struct.pack_into("<II", buf, 56, image_size, headers_size)
    struct.pack_into("<I", buf, 64, checksum)
    struct.pack_into("<HH", buf, 68, 3, 0)  # console subsystem
    struct.pack_into("<IIII", buf, 72, 0x100000, 0x1000, 0x100000, 0x1000)
    struct.pack_into("<I", buf, 92, 0)  # no data directories
    return bytes(buf)


def _malicious_content(rng: np.random.Generator, length: int, markers: list[bytes],
                       benign_frac: float) -> bytes:
    """Block-mixed malicious section data.

    Real malware carries plenty of ordinary-looking code and data, so each
    section interleaves benign-distribution blocks (per-file fraction) with
    high-entropy malicious blocks carrying the marker 4-grams. The benign
    share is what gives dilution attacks a reachable decision boundary.
    """
    blocks: list[bytes] = []
    remaining = length
    while remaining > 0:
        blen = min(int(rng.integers(128, 513)), remaining)
        if rng.random() < benign_frac:
            blocks.append(sample_benign(rng, blen))
        else:
            block = bytearray(sample_malicious(rng, blen))
            step = int(rng.integers(160, 321))
            pos = int(rng.integers(0, max(step - 4, 1)))
            while pos + 4 <= len(block):
                block[pos : pos + 4] = markers[int(rng.integers(0, len(markers)))]
                pos += step
            blocks.append(bytes(block))
        remaining -= blen
    return b"".join(blocks)


def generate_sample_bytes(sample_seed: int, malicious: bool, markers: list[bytes],
                          min_size: int, max_size: int) -> bytes:
    """Deterministically build one synthetic PE file from its seed.

    The emitted size always lands inside [min_size, max_size]; requires
    max_size >= min_size + 4096 for the apportioning below.
    """
    rng = make_rng(sample_seed, "sample")
    # Benign software is structurally diverse (installers carry fat overlays,
    # multi-section layouts); malware leans packed and lean. The overlap is
    # what keeps the post-attack region inside benign support.
    n_sections = int(rng.integers(1, 4)) if malicious else int(rng.integers(2, 6))
    benign_frac = float(rng.uniform(0.35, 0.75)) if malicious else 1.0

    if malicious:
        stub = bytes(58) if rng.random() < 0.5 else rng.integers(0, 256, 58, dtype=np.int64).astype(np.uint8).tobytes()
        timestamp = int(rng.integers(1072915200, 1672531200))  # 2004..2023
        checksum = 0 if rng.random() < 0.2 else int(rng.integers(1, 2**32))
        overlay_frac = float(rng.uniform(0.05, 0.25)) if rng.random() < 0.25 else 0.0
    else:
        stub = _DOS_TEXT.ljust(58, b"\x00")[:58]
        timestamp = int(rng.integers(1546300800, 1672531200))  # 2019..2023
        checksum = 0 if rng.random() < 0.7 else int(rng.integers(1, 2**32))
        overlay_frac = float(rng.uniform(0.1, 0.55)) if rng.random() < 0.55 else 0.0

    header_size = 64 + 4 + 20 + 96 + 40 * n_sections
    raw_base = pe.align_up(header_size, pe.FILE_ALIGN)

    # Reserve one alignment block per section so the final size cannot
    # overshoot the target; the floor keeps every section at >= 600 bytes.
    floor_target = raw_base + (600 + pe.FILE_ALIGN) * n_sections + 256
    lo = max(min_size + (pe.FILE_ALIGN + 1) * n_sections, floor_target)
    target = int(rng.integers(lo, max(max_size + 1, lo + 1)))
    room = target - floor_target
    overlay_len = int(room * overlay_frac)
    if overlay_len:
        if malicious:
            overlay = rng.integers(0, 256, overlay_len, dtype=np.int64).astype(np.uint8).tobytes()
        else:
            overlay = sample_benign(rng, overlay_len)
    else:
        overlay = b""
    content_total = target - raw_base - overlay_len - pe.FILE_ALIGN * n_sections
    weights = rng.random(n_sections) + 0.25
    weights /= weights.sum()
    spare = content_total - 600 * n_sections
    lengths = [600 + int(spare * w) for w in weights]

    sections: list[tuple[bytes, int, bytes]] = []  # (name, characteristics, content)
    for i, length in enumerate(lengths):
        if i == 0:
            name = b".text"
            flags = pe.SCN_CNT_CODE | pe.SCN_MEM_EXECUTE | pe.SCN_MEM_READ
        else:
            name = (b".data", b".rdata", b".rsrc", b".idata")[i % 4]
            flags = pe.SCN_CNT_INITIALIZED_DATA | pe.SCN_MEM_READ
        if malicious:
            content = _malicious_content(rng, length, markers, benign_frac)
        else:
            content = bytearray(sample_benign(rng, length))
            if i > 0 and rng.random() < 0.2:
                # sparse marker contamination: benign software occasionally
                # contains the same n-grams, so presence alone cannot separate
                for _ in range(int(rng.integers(1, 4))):
                    pos = int(rng.integers(0, max(len(content) - 4, 1)))
                    content[pos : pos + 4] = markers[int(rng.integers(0, len(markers)))]
            content = bytes(content)
        sections.append((name, flags, content))

    records: list[pe.SectionRecord] = []
    raw_offset = raw_base
    va = pe.SECTION_ALIGN
    for name, flags, content in sections:
        padded = content.ljust(pe.align_up(len(content), pe.FILE_ALIGN), b"\x00")
        records.append(
            pe.SectionRecord(
                name=name.ljust(8, b"\x00"),
                virtual_size=len(content),
                virtual_address=va,
                raw_offset=raw_offset,
                characteristics=flags,
                data=padded,
            )
        )
        raw_offset += len(padded)
        va = pe.align_up(va + len(content), pe.SECTION_ALIGN)

    text = records[0]
    entry = text.virtual_address + int(rng.integers(0, max(text.virtual_size - 16, 1)))
    optional = _optional_header(
        rng,
        entry=entry,
        code_size=text.raw_size,
        data_size=sum(r.raw_size for r in records[1:]),
        image_size=va,
        headers_size=raw_base,
        checksum=checksum,
    )

    img = pe.PeImage(
        dos=pe.DosHeader(e_magic=pe.DOS_MAGIC, stub=stub, e_lfanew=64, stub2=b""),
        coff=pe.CoffHeader(
            machine=0x14C,
            section_count=len(records),
            timestamp=timestamp,
            symtab_offset=0,
            symbol_count=0,
            optional_size=96,
            characteristics=0x0102,  # executable, 32-bit
        ),
        optional=pe.OptionalHeader(raw=optional),
        sections=tuple(records),
        overlay=overlay,
    )
    return pe.serialize(img)


def generate_corpus(cfg: CorpusConfig, out_dir: Path | str) -> CorpusManifest:
    """Emit the corpus files plus manifest.json under out_dir."""
    split_sizes = {
        SPLIT_TRAIN_A: cfg.train_a,
        SPLIT_TRAIN_B: cfg.train_b,
        SPLIT_POLICY: cfg.train_policy,
        SPLIT_EVAL: cfg.eval_set,
    }
    for split, (n_mal, n_ben) in split_sizes.items():
        if n_mal < 10 or n_ben < 10:
            raise ValueError(f"split {split} needs at least 10 samples per class")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    markers = marker_set(cfg.seed, cfg.marker_count)

    manifest = CorpusManifest(corpus_seed=cfg.seed, params=cfg.params_doc())
    short = {SPLIT_TRAIN_A: "ta", SPLIT_TRAIN_B: "tb", SPLIT_POLICY: "tp", SPLIT_EVAL: "ev"}
    for split, (n_mal, n_ben) in split_sizes.items():
        for label, count in (("malicious", n_mal), ("benign", n_ben)):
            for i in range(count):
                sample_id = f"{label[:3]}-{short[split]}-{i:05d}"
                seed = derive_seed(cfg.seed, split, label, i)
                data = generate_sample_bytes(seed, label == "malicious", markers,
                                             cfg.min_size, cfg.max_size)
                digest = sha256_hex(data)
                rel = f"blobs/{digest[:2]}/{digest}.bin"
                target = out / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                if not target.exists():
                    target.write_bytes(data)
                manifest.samples.append(
                    SampleSpec(
                        id=sample_id,
                        path=rel,
                        label=label,
                        seed=seed,
                        split=split,
                        sha256=digest,
                        size=len(data),
                    )
                )
    manifest.save(out / "manifest.json")
    return manifest


def load_corpus(manifest_path: Path | str) -> tuple[CorpusManifest, list[Sample]]:
    """Read samples back, verifying each content digest."""
    manifest_path = Path(manifest_path)
    manifest = CorpusManifest.load(manifest_path)
    base = manifest_path.parent
    loaded: list[Sample] = []
    for spec in manifest.samples:
        path = base / spec.path
        if not path.exists():
            raise MissingFile(f"{spec.id}: {spec.path} missing")
        data = path.read_bytes()
        if sha256_hex(data) != spec.sha256:
            raise DigestMismatch(f"{spec.id}: content digest does not match manifest")
        loaded.append(Sample(spec=spec, data=data))
    return manifest, loaded
