"""Minimal PE-format image: parse, validate, mutate, re-serialize.

Scope is deliberately small: MZ/DOS header with stub, COFF header, an opaque
optional header, a section table with raw data, and a trailing overlay.
Imports, relocations and resources are out of scope; unknown header bytes are
carried verbatim so emitted files round-trip byte-exactly.

Layout discipline for emitted files: file alignment 512, section alignment
4096, sections packed contiguously after the header region.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace

from .errors import InapplicableAction, LayoutOverflow, MalformedHeader, TruncatedSection

DOS_MAGIC = b"MZ"
PE_SIGNATURE = b"PE\x00\x00"

FILE_ALIGN = 512
SECTION_ALIGN = 4096

PE32_MAGIC = 0x10B

SCN_CNT_CODE = 0x00000020
SCN_CNT_INITIALIZED_DATA = 0x00000040
SCN_MEM_EXECUTE = 0x20000000
SCN_MEM_READ = 0x40000000
SCN_MEM_WRITE = 0x80000000

# Offsets of fields inside the (PE32) optional header blob.
_OPT_MAGIC = 0
_OPT_ENTRY_POINT = 16
_OPT_IMAGE_BASE = 28
_OPT_SECTION_ALIGN = 32
_OPT_FILE_ALIGN = 36
_OPT_SIZE_OF_IMAGE = 56
_OPT_SIZE_OF_HEADERS = 60
_OPT_CHECKSUM = 64
_OPT_DATA_DIR_COUNT = 92

_DOS_STUB_LO = 2  # first mutable DOS byte
_DOS_STUB_HI = 60  # e_lfanew occupies 60..63


def align_up(value: int, alignment: int) -> int:
    return (value + alignment - 1) // alignment * alignment


@dataclass(frozen=True)
class DosHeader:
    e_magic: bytes  # bytes 0..1, must be b"MZ"
    stub: bytes  # bytes 2..59 of the 64-byte header region
    e_lfanew: int  # u32le at 0x3C, offset of the PE signature
    stub2: bytes  # optional stub program between byte 64 and e_lfanew


@dataclass(frozen=True)
class CoffHeader:
    machine: int
    section_count: int
    timestamp: int
    symtab_offset: int
    symbol_count: int
    optional_size: int
    characteristics: int


@dataclass(frozen=True)
class OptionalHeader:
    """Opaque optional-header bytes with typed accessors for the fields we touch."""

    raw: bytes

    def _u16(self, off: int) -> int | None:
        if off + 2 > len(self.raw):
            return None
        return struct.unpack_from("<H", self.raw, off)[0]

    def _u32(self, off: int) -> int | None:
        if off + 4 > len(self.raw):
            return None
        return struct.unpack_from("<I", self.raw, off)[0]

    def _with_u32(self, off: int, value: int) -> "OptionalHeader":
        if off + 4 > len(self.raw):
            raise InapplicableAction(f"optional header too short for field at {off}")
        buf = bytearray(self.raw)
        struct.pack_into("<I", buf, off, value & 0xFFFFFFFF)
        return OptionalHeader(bytes(buf))

    @property
    def magic(self) -> int | None:
        return self._u16(_OPT_MAGIC)

    @property
    def entry_point(self) -> int | None:
        return self._u32(_OPT_ENTRY_POINT)

    @property
    def image_base(self) -> int | None:
        return self._u32(_OPT_IMAGE_BASE)

    @property
    def section_alignment(self) -> int | None:
        return self._u32(_OPT_SECTION_ALIGN)

    @property
    def file_alignment(self) -> int | None:
        return self._u32(_OPT_FILE_ALIGN)

    @property
    def checksum(self) -> int | None:
        return self._u32(_OPT_CHECKSUM)

    @property
    def data_dir_count(self) -> int | None:
        return self._u32(_OPT_DATA_DIR_COUNT)

    def with_checksum(self, value: int) -> "OptionalHeader":
        return self._with_u32(_OPT_CHECKSUM, value)

    def with_entry_point(self, value: int) -> "OptionalHeader":
        return self._with_u32(_OPT_ENTRY_POINT, value)


@dataclass(frozen=True)
class SectionRecord:
    name: bytes  # exactly 8 bytes, zero padded
    virtual_size: int
    virtual_address: int
    raw_offset: int  # file offset of the raw data; raw size == len(data)
    characteristics: int
    data: bytes  # full raw extent including alignment padding
    reserved: bytes = b"\x00" * 12  # relocation/linenumber fields, carried verbatim

    @property
    def raw_size(self) -> int:
        return len(self.data)

    @property
    def executable(self) -> bool:
        return bool(self.characteristics & SCN_MEM_EXECUTE)


@dataclass(frozen=True)
class PeImage:
    dos: DosHeader
    coff: CoffHeader
    optional: OptionalHeader
    sections: tuple[SectionRecord, ...]
    overlay: bytes

    def header_size(self) -> int:
        return 64 + len(self.dos.stub2) + 4 + 20 + len(self.optional.raw) + 40 * len(self.sections)


def parse(data: bytes) -> PeImage:
    """Parse raw bytes into a PeImage.

    Raises MalformedHeader or TruncatedSection on anything that does not look
    like a minimal PE file; never reads out of bounds.
    """
    if len(data) < 64:
        raise MalformedHeader("input shorter than the 64-byte DOS header")
    if data[:2] != DOS_MAGIC:
        raise MalformedHeader("e_magic is not MZ")
    e_lfanew = struct.unpack_from("<I", data, 0x3C)[0]
    if e_lfanew < 64:
        raise MalformedHeader(f"e_lfanew {e_lfanew} points inside the DOS header")
    if e_lfanew + 4 > len(data):
        raise MalformedHeader(f"e_lfanew {e_lfanew} points past end of file")
    if data[e_lfanew : e_lfanew + 4] != PE_SIGNATURE:
        raise MalformedHeader("missing PE\\0\\0 signature at e_lfanew")

    dos = DosHeader(
        e_magic=data[0:2],
        stub=data[2:0x3C],
        e_lfanew=e_lfanew,
        stub2=data[64:e_lfanew],
    )

    coff_off = e_lfanew + 4
    if coff_off + 20 > len(data):
        raise MalformedHeader("COFF header truncated")
    machine, section_count, timestamp = struct.unpack_from("<HHI", data, coff_off)
    symtab_offset, symbol_count, optional_size, characteristics = struct.unpack_from(
        "<IIHH", data, coff_off + 8
    )
    coff = CoffHeader(
        machine=machine,
        section_count=section_count,
        timestamp=timestamp,
        symtab_offset=symtab_offset,
        symbol_count=symbol_count,
        optional_size=optional_size,
        characteristics=characteristics,
    )

    opt_off = coff_off + 20
    if opt_off + optional_size > len(data):
        raise MalformedHeader("optional header truncated")
    optional = OptionalHeader(raw=data[opt_off : opt_off + optional_size])

    table_off = opt_off + optional_size
    table_end = table_off + 40 * section_count
    if table_end > len(data):
        raise MalformedHeader("section table truncated")

    sections: list[SectionRecord] = []
    data_end = table_end
    for i in range(section_count):
        off = table_off + 40 * i
        name = data[off : off + 8]
        virtual_size, virtual_address, raw_size, raw_offset = struct.unpack_from(
            "<IIII", data, off + 8
        )
        reserved = data[off + 24 : off + 36]
        (section_characteristics,) = struct.unpack_from("<I", data, off + 36)
        if raw_size > 0:
            if raw_offset + raw_size > len(data):
                raise TruncatedSection(
                    f"section {i} raw extent [{raw_offset}, {raw_offset + raw_size}) beyond EOF"
                )
            payload = data[raw_offset : raw_offset + raw_size]
            data_end = max(data_end, raw_offset + raw_size)
        else:
            payload = b""
        sections.append(
            SectionRecord(
                name=name,
                virtual_size=virtual_size,
                virtual_address=virtual_address,
                raw_offset=raw_offset,
                characteristics=section_characteristics,
                data=payload,
                reserved=reserved,
            )
        )

    return PeImage(
        dos=dos,
        coff=coff,
        optional=optional,
        sections=tuple(sections),
        overlay=data[data_end:],
    )


def serialize(img: PeImage) -> bytes:
    """Re-emit an image as a flat file.

    Byte-exact inverse of parse for images this module produced; raises
    LayoutOverflow when the recorded section extents cannot be packed.
    """
    header_size = img.header_size()
    e_lfanew = 64 + len(img.dos.stub2)

    extents = sorted(
        ((s.raw_offset, s.raw_offset + s.raw_size, i) for i, s in enumerate(img.sections) if s.raw_size),
        key=lambda t: t[0],
    )
    prev_end = header_size
    for start, end, i in extents:
        if start < prev_end:
            raise LayoutOverflow(
                f"section {i} extent [{start}, {end}) collides with bytes below {prev_end}"
            )
        prev_end = end

    file_end = max(header_size, prev_end)
    buf = bytearray(file_end)

    buf[0:2] = img.dos.e_magic
    buf[2:0x3C] = img.dos.stub[:58].ljust(58, b"\x00")
    struct.pack_into("<I", buf, 0x3C, e_lfanew)
    buf[64 : 64 + len(img.dos.stub2)] = img.dos.stub2

    pos = e_lfanew
    buf[pos : pos + 4] = PE_SIGNATURE
    pos += 4
    struct.pack_into(
        "<HHIIIHH",
        buf,
        pos,
        img.coff.machine & 0xFFFF,
        len(img.sections) & 0xFFFF,
        img.coff.timestamp & 0xFFFFFFFF,
        img.coff.symtab_offset & 0xFFFFFFFF,
        img.coff.symbol_count & 0xFFFFFFFF,
        len(img.optional.raw) & 0xFFFF,
        img.coff.characteristics & 0xFFFF,
    )
    pos += 20
    buf[pos : pos + len(img.optional.raw)] = img.optional.raw
    pos += len(img.optional.raw)

    for s in img.sections:
        buf[pos : pos + 8] = s.name[:8].ljust(8, b"\x00")
        struct.pack_into(
            "<IIII",
            buf,
            pos + 8,
            s.virtual_size & 0xFFFFFFFF,
            s.virtual_address & 0xFFFFFFFF,
            s.raw_size & 0xFFFFFFFF,
            (s.raw_offset if s.raw_size else 0) & 0xFFFFFFFF,
        )
        buf[pos + 24 : pos + 36] = s.reserved[:12].ljust(12, b"\x00")
        struct.pack_into("<I", buf, pos + 36, s.characteristics & 0xFFFFFFFF)
        pos += 40

    for s in img.sections:
        if s.raw_size:
            buf[s.raw_offset : s.raw_offset + s.raw_size] = s.data

    return bytes(buf) + img.overlay


def validate(img: PeImage) -> list[str]:
    """Structural invariant check; returns one message per violation."""
    violations: list[str] = []
    if img.dos.e_magic != DOS_MAGIC:
        violations.append("dos_header: e_magic is not MZ")
    if img.dos.e_lfanew < 64:
        violations.append(f"dos_header: e_lfanew {img.dos.e_lfanew} < 64")
    elif img.dos.e_lfanew != 64 + len(img.dos.stub2):
        violations.append("dos_header: e_lfanew inconsistent with stub length")
    if len(img.dos.stub) != 58:
        violations.append(f"dos_header: stub region is {len(img.dos.stub)} bytes, expected 58")
    if img.coff.section_count != len(img.sections):
        violations.append(
            f"coff_header: section count {img.coff.section_count} != {len(img.sections)} sections"
        )
    if img.coff.optional_size != len(img.optional.raw):
        violations.append("coff_header: optional-header size mismatch")
    if img.optional.magic is not None and img.optional.magic != PE32_MAGIC:
        violations.append(f"optional_header: magic 0x{img.optional.magic:x} is not PE32")

    header_size = img.header_size()
    extents: list[tuple[int, int, int]] = []
    for i, s in enumerate(img.sections):
        if len(s.name) != 8:
            violations.append(f"section {i}: name is {len(s.name)} bytes, expected 8")
        if s.raw_size % FILE_ALIGN != 0:
            violations.append(f"section {i}: raw size {s.raw_size} not a multiple of {FILE_ALIGN}")
        if s.raw_size:
            if s.raw_offset % FILE_ALIGN != 0:
                violations.append(f"section {i}: raw offset {s.raw_offset} misaligned")
            if s.raw_offset < header_size:
                violations.append(f"section {i}: raw extent overlaps the header region")
            extents.append((s.raw_offset, s.raw_offset + s.raw_size, i))
        if s.virtual_address % SECTION_ALIGN != 0:
            violations.append(f"section {i}: virtual address {s.virtual_address} misaligned")

    extents.sort()
    for (s0, e0, i0), (s1, e1, i1) in zip(extents, extents[1:]):
        if s1 < e0:
            violations.append(f"section {i1}: raw extent overlaps section {i0}")

    return violations


def code_fingerprint(img: PeImage) -> str:
    """Digest over the entry-point RVA and all executable section bytes.

    Acts as the functionality-preservation proxy: transforms must leave it
    unchanged. Headers, non-executable sections and the overlay are excluded.
    """
    h = hashlib.sha256()
    entry = img.optional.entry_point or 0
    h.update(struct.pack("<I", entry))
    for s in img.sections:
        if s.executable:
            h.update(b"\x00sec\x00")
            h.update(s.data)
    return h.hexdigest()


# --- mutation helpers (all return new images; PeImage is immutable) ---


def append_overlay(img: PeImage, extra: bytes) -> PeImage:
    return replace(img, overlay=img.overlay + extra)


def with_timestamp(img: PeImage, value: int) -> PeImage:
    return replace(img, coff=replace(img.coff, timestamp=value & 0xFFFFFFFF))


def with_checksum(img: PeImage, value: int) -> PeImage:
    return replace(img, optional=img.optional.with_checksum(value))


def with_renamed_section(img: PeImage, index: int, name: bytes) -> PeImage:
    if not 0 <= index < len(img.sections):
        raise InapplicableAction(f"no section at index {index}")
    sections = list(img.sections)
    sections[index] = replace(sections[index], name=name[:8].ljust(8, b"\x00"))
    return replace(img, sections=tuple(sections))


def with_section_slack(img: PeImage, index: int, fill: bytes) -> PeImage:
    """Overwrite the slack bytes between virtual_size and raw_size of a section.

    Refused for executable sections: their raw bytes feed the code fingerprint.
    """
    if not 0 <= index < len(img.sections):
        raise InapplicableAction(f"no section at index {index}")
    s = img.sections[index]
    if s.executable:
        raise InapplicableAction(f"section {index} is executable")
    slack = s.raw_size - min(s.virtual_size, s.raw_size)
    if slack <= 0:
        raise InapplicableAction(f"section {index} has no slack")
    start = s.raw_size - slack
    payload = fill[:slack].ljust(slack, b"\x00")
    sections = list(img.sections)
    sections[index] = replace(s, data=s.data[:start] + payload)
    return replace(img, sections=tuple(sections))


def with_dos_stub(img: PeImage, stub: bytes) -> PeImage:
    """Replace DOS header bytes 2..59; e_magic and e_lfanew are untouchable."""
    if len(stub) != 58:
        raise InapplicableAction(f"DOS stub replacement must be 58 bytes, got {len(stub)}")
    return replace(img, dos=replace(img.dos, stub=stub))


def add_section(img: PeImage, name: bytes, content: bytes, characteristics: int) -> PeImage:
    """Append a section with canonically assigned raw offset and virtual address.

    Existing section data is untouched; raw offsets shift only when the grown
    section table crosses a file-alignment boundary.
    """
    padded = content.ljust(align_up(max(len(content), 1), FILE_ALIGN), b"\x00")

    old_header_end = align_up(img.header_size(), FILE_ALIGN)
    new_header_end = align_up(img.header_size() + 40, FILE_ALIGN)
    delta = new_header_end - old_header_end

    sections = [
        replace(s, raw_offset=s.raw_offset + delta if s.raw_size else 0) for s in img.sections
    ]
    tail = max([s.raw_offset + s.raw_size for s in sections if s.raw_size], default=new_header_end)
    new_offset = align_up(max(tail, new_header_end), FILE_ALIGN)
    next_va = max(
        [align_up(s.virtual_address + max(s.virtual_size, 1), SECTION_ALIGN) for s in img.sections],
        default=SECTION_ALIGN,
    )
    sections.append(
        SectionRecord(
            name=name[:8].ljust(8, b"\x00"),
            virtual_size=len(content),
            virtual_address=next_va,
            raw_offset=new_offset,
            characteristics=characteristics,
            data=padded,
        )
    )
    return replace(
        img,
        sections=tuple(sections),
        coff=replace(img.coff, section_count=len(sections)),
    )
