"""Program image loading: ELF64 (RISC-V), flat binaries and text listings."""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import isa
from .errors import DecodeError

EM_RISCV = 243
PT_LOAD = 1
PF_X, PF_W, PF_R = 1, 2, 4
SHT_PROGBITS, SHT_STRTAB, SHT_NOBITS = 1, 3, 8
SHF_ALLOC, SHF_EXECINSTR = 0x2, 0x4

DEFAULT_BASE = 0x8000_0000

_LISTING_LINE = re.compile(r"^\s*([0-9a-fA-F]+)\s*:\s*([0-9a-fA-F]{8})\s*$")


@dataclass(frozen=True)
class Segment:
    address: int
    data: bytes
    executable: bool = True
    memsize: int = 0

    @property
    def end(self) -> int:
        return self.address + max(len(self.data), self.memsize)


@dataclass(frozen=True)
class ProgramImage:
    """Loaded program.

    ``code`` holds the regions that are decoded as instructions;
    ``segments`` holds everything that is copied into simulator memory
    (code regions included).
    """

    code: tuple[Segment, ...]
    entry: int
    format: str
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        if not self.segments:
            object.__setattr__(self, "segments", self.code)
        if self.code and not any(r.address <= self.entry < r.address + len(r.data) for r in self.code):
            raise DecodeError(f"entry point 0x{self.entry:x} lies outside the code regions")

    @property
    def base_address(self) -> int:
        return self.code[0].address if self.code else 0

    @property
    def data(self) -> bytes:
        return self.code[0].data if self.code else b""

    def words(self):
        """Yield (address, word) for every 32-bit word of every code region."""
        for region in self.code:
            for off in range(0, len(region.data) - 3, 4):
                yield region.address + off, int.from_bytes(region.data[off:off + 4], "little")


def from_words(words: dict[int, int], entry: Optional[int] = None, fmt: str = "listing") -> ProgramImage:
    """Group address->word pairs into contiguous code regions."""
    regions = []
    start = prev = None
    buf = bytearray()
    for addr in sorted(words):
        if prev is not None and addr != prev + 4:
            regions.append(Segment(start, bytes(buf)))
            buf = bytearray()
            start = None
        if start is None:
            start = addr
        buf += words[addr].to_bytes(4, "little")
        prev = addr
    if start is not None:
        regions.append(Segment(start, bytes(buf)))
    if entry is None:
        entry = regions[0].address if regions else 0
    return ProgramImage(tuple(regions), entry, fmt)


def from_instructions(instrs, entry: Optional[int] = None) -> ProgramImage:
    return from_words({i.address: isa.encode(i) for i in instrs}, entry)


def parse_listing(text: str, entry: Optional[int] = None) -> ProgramImage:
    words = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        m = _LISTING_LINE.match(body)
        if not m:
            raise DecodeError(f"listing line {lineno}: expected 'HEXADDR: HEXWORD8', got {line.strip()!r}")
        addr, word = int(m.group(1), 16), int(m.group(2), 16)
        if addr % 4:
            raise DecodeError(f"listing line {lineno}: address 0x{addr:x} is not word aligned")
        if addr in words:
            raise DecodeError(f"listing line {lineno}: duplicate address 0x{addr:x}")
        words[addr] = word
    return from_words(words, entry)


def parse_flat(data: bytes, base: int = DEFAULT_BASE, entry: Optional[int] = None) -> ProgramImage:
    if len(data) % 4:
        raise DecodeError(f"unaligned flat image: {len(data)} bytes is not a multiple of 4")
    if base % 4:
        raise DecodeError(f"flat image base 0x{base:x} is not word aligned")
    return ProgramImage((Segment(base, bytes(data)),), base if entry is None else entry, "flat")


def parse_elf(data: bytes) -> ProgramImage:
    if len(data) < 64 or data[:4] != b"\x7fELF":
        raise DecodeError("malformed ELF header: bad magic")
    if data[4] != 2:
        raise DecodeError("malformed ELF header: not a 64-bit ELF")
    if data[5] != 1:
        raise DecodeError("malformed ELF header: not little-endian")
    (e_type, e_machine, _version, e_entry, e_phoff, e_shoff, _flags, _ehsize,
     e_phentsize, e_phnum, e_shentsize, e_shnum, _shstrndx) = struct.unpack_from("<HHIQQQIHHHHHH", data, 16)
    if e_machine != EM_RISCV:
        raise DecodeError(f"not a RISC-V ELF (machine type {e_machine})")

    def chunk(offset, size, what):
        if offset + size > len(data):
            raise DecodeError(f"malformed ELF: {what} extends past end of file")
        return data[offset:offset + size]

    segments = []
    if e_phnum and e_phentsize < 56:
        raise DecodeError("malformed ELF: program header entries too small")
    for i in range(e_phnum):
        p_type, p_flags, p_offset, p_vaddr, _paddr, p_filesz, p_memsz, _align = struct.unpack_from(
            "<IIQQQQQQ", chunk(e_phoff + i * e_phentsize, 56, "program header"))
        if p_type != PT_LOAD:
            continue
        segments.append(Segment(p_vaddr, chunk(p_offset, p_filesz, "segment"), bool(p_flags & PF_X), p_memsz))

    code = []
    if e_shnum and e_shentsize >= 64:
        for i in range(e_shnum):
            (_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size, *_rest) = struct.unpack_from(
                "<IIQQQQIIQQ", chunk(e_shoff + i * e_shentsize, 64, "section header"))
            if sh_type == SHT_PROGBITS and sh_flags & SHF_EXECINSTR and sh_flags & SHF_ALLOC and sh_size:
                code.append(Segment(sh_addr, chunk(sh_offset, sh_size, "section")))
    if not code:
        code = [Segment(s.address, s.data) for s in segments if s.executable and s.data]
    if not code:
        raise DecodeError("ELF has no executable PT_LOAD segment")
    for region in code:
        if region.address % 4 or len(region.data) % 4:
            raise DecodeError(f"executable region at 0x{region.address:x} is not word aligned")
    code.sort(key=lambda s: s.address)
    return ProgramImage(tuple(code), e_entry, "elf64", tuple(segments))


def detect_format(path: Path) -> str:
    head = path.read_bytes()[:4096]
    if head.startswith(b"\x7fELF"):
        return "elf64"
    try:
        text = head.decode("utf-8")
    except UnicodeDecodeError:
        return "flat"
    for line in text.splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            return "listing" if _LISTING_LINE.match(body) else "flat"
    return "listing"


def load_image(path, fmt: Optional[str] = None, base: int = DEFAULT_BASE,
               entry: Optional[int] = None) -> ProgramImage:
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"input file not found: {path}")
    fmt = fmt or detect_format(path)
    if fmt == "elf64":
        return parse_elf(path.read_bytes())
    if fmt == "flat":
        return parse_flat(path.read_bytes(), base, entry)
    if fmt == "listing":
        return parse_listing(path.read_text(encoding="utf-8"), entry)
    raise DecodeError(f"unknown image format {fmt!r}")


def decode_image(image: ProgramImage) -> list[isa.Instruction]:
    return [isa.decode(word, addr) for addr, word in image.words()]


def write_elf(path, code: bytes, base: int = DEFAULT_BASE, entry: Optional[int] = None,
              machine: int = EM_RISCV, data_segments: Sequence[Segment] = ()) -> None:
    """Write a minimal static ELF64 with a .text section and optional data."""
    entry = base if entry is None else entry
    loads = [(base, code, PF_R | PF_X, len(code))]
    loads += [(s.address, s.data, PF_R | PF_W, max(s.memsize, len(s.data))) for s in data_segments]
    phoff = 64
    offset = phoff + 56 * len(loads)
    blobs = []
    phdrs = b""
    for vaddr, blob, flags, memsz in loads:
        phdrs += struct.pack("<IIQQQQQQ", PT_LOAD, flags, offset, vaddr, vaddr, len(blob), memsz, 4)
        blobs.append((offset, blob))
        offset += len(blob)
    shstrtab = b"\0.text\0.shstrtab\0"
    shstr_off = offset
    offset += len(shstrtab)
    offset = (offset + 7) & ~7
    shoff = offset
    text_off = blobs[0][0]
    shdrs = bytes(64)
    shdrs += struct.pack("<IIQQQQIIQQ", 1, SHT_PROGBITS, SHF_ALLOC | SHF_EXECINSTR, base, text_off,
                         len(code), 0, 0, 4, 0)
    shdrs += struct.pack("<IIQQQQIIQQ", 7, SHT_STRTAB, 0, 0, shstr_off, len(shstrtab), 0, 0, 1, 0)
    header = b"\x7fELF" + bytes([2, 1, 1, 0]) + bytes(8)
    header += struct.pack("<HHIQQQIHHHHHH", 2, machine, 1, entry, phoff, shoff, 0, 64, 56,
                          len(loads), 64, 3, 2)
    out = bytearray(header + phdrs)
    for off, blob in blobs:
        assert len(out) == off
        out += blob
    out += shstrtab
    out += bytes(shoff - len(out))
    out += shdrs
    Path(path).write_bytes(bytes(out))
