"""Instruction-accurate RV64IM interpreter with basic-block profiling.

The interpreter executes whole basic blocks; a block's counter is bumped on
every entry.  Programs run bare-metal: ``ecall`` with a7=93 exits with the
code in a0, a7=64 writes a1[0:a2] to standard output, and ``ebreak`` stops
with exit code 0.

:func:`replay_fused` re-runs a program with selected pattern occurrences
fused: blocks holding fused occurrences are executed in data-flow order over
the contracted graph, each fused occurrence retiring in one cycle.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from . import isa
from .errors import ProfileError, StepLimitExceeded, Trap
from .image import ProgramImage
from .isa import MASK64, Instruction
from .program_graph import BasicBlock, DataFlowGraph, iter_bits
from .semantics import BINARY, s64

DEFAULT_MEMORY = 16 << 20
DEFAULT_MAX_STEPS = 50_000_000

SYS_WRITE, SYS_EXIT = 64, 93

_LOAD_SHAPE = {"lb": (1, True), "lh": (2, True), "lw": (4, True), "ld": (8, False),
               "lbu": (1, False), "lhu": (2, False), "lwu": (4, False)}
_STORE_SIZE = {"sb": 1, "sh": 2, "sw": 4, "sd": 8}
_BRANCH = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: s64(a) < s64(b),
    "bge": lambda a, b: s64(a) >= s64(b),
    "bltu": lambda a, b: a < b,
    "bgeu": lambda a, b: a >= b,
}


@dataclass
class Profile:
    counts: dict  # block start address -> execution count
    sizes: dict  # block start address -> instruction count
    exit_code: Optional[int] = None
    stdout: bytes = b""
    steps: int = 0

    @property
    def f_total(self) -> int:
        return sum(c * self.sizes[a] for a, c in self.counts.items())

    def by_block_id(self, blocks: Sequence[BasicBlock]) -> dict[int, int]:
        return {b.id: self.counts.get(b.start_address, 0) for b in blocks}


class _Halt(Exception):
    def __init__(self, code):
        self.code = code


class Machine:
    """Architectural state: 32 registers, a pc and one flat memory region."""

    def __init__(self, image: ProgramImage, memory_size: int = DEFAULT_MEMORY):
        segments = image.segments or image.code
        self.mem_base = min(s.address for s in segments) if segments else 0
        self.mem = bytearray(memory_size)
        for s in segments:
            off = s.address - self.mem_base
            if off + max(len(s.data), s.memsize) > memory_size:
                raise ProfileError(f"segment at 0x{s.address:x} does not fit in {memory_size} bytes of memory")
            self.mem[off:off + len(s.data)] = s.data
        self.regs = [0] * 32
        self.regs[2] = (self.mem_base + memory_size) & MASK64  # sp at the top of memory
        self.pc = image.entry
        self.stdout = bytearray()

    def _offset(self, addr: int, size: int, pc: int) -> int:
        if addr % size:
            raise Trap(f"misaligned {size}-byte access to 0x{addr:x}", pc)
        off = addr - self.mem_base
        if off < 0 or off + size > len(self.mem):
            raise Trap(f"access to 0x{addr:x} outside memory", pc)
        return off

    def load(self, addr: int, size: int, signed: bool, pc: int) -> int:
        off = self._offset(addr, size, pc)
        value = int.from_bytes(self.mem[off:off + size], "little", signed=signed)
        return value & MASK64

    def store(self, addr: int, size: int, value: int, pc: int) -> None:
        off = self._offset(addr, size, pc)
        self.mem[off:off + size] = (value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")

    def syscall(self, pc: int) -> None:
        num = self.regs[17]
        if num == SYS_EXIT:
            raise _Halt(s64(self.regs[10]) & 0xFF)
        if num == SYS_WRITE:
            addr, length = self.regs[11], self.regs[12]
            off = self._offset(addr, 1, pc)
            if off + length > len(self.mem):
                raise Trap(f"write buffer 0x{addr:x}+{length} outside memory", pc)
            self.stdout += self.mem[off:off + length]
            self.regs[10] = length
            return
        raise Trap(f"unsupported ecall number {num}", pc)


def _compile(ins: Instruction):
    """Executor for one instruction: f(machine) -> next pc or None (fall through)."""
    mn, rd, rs1, rs2, pc = ins.mnemonic, ins.rd, ins.rs1, ins.rs2, ins.address
    imm = (ins.imm or 0) & MASK64
    op = ins.op

    def write(m, value):
        if rd:
            m.regs[rd] = value

    if op.kind == isa.ALU:
        if mn == "lui":
            return lambda m: write(m, imm)
        if mn == "auipc":
            value = (pc + imm) & MASK64
            return lambda m: write(m, value)
        f = BINARY[op.semantic]
        if op.has_rs2:
            return lambda m: write(m, f(m.regs[rs1], m.regs[rs2]))
        return lambda m: write(m, f(m.regs[rs1], imm))
    if ins.is_load:
        size, signed = _LOAD_SHAPE[mn]
        return lambda m: write(m, m.load((m.regs[rs1] + imm) & MASK64, size, signed, pc))
    if ins.is_store:
        size = _STORE_SIZE[mn]

        def store(m):
            m.store((m.regs[rs1] + imm) & MASK64, size, m.regs[rs2], pc)
        return store
    if ins.is_branch:
        cond, target = _BRANCH[mn], ins.target
        return lambda m: target if cond(m.regs[rs1], m.regs[rs2]) else None
    if mn == "jal":
        target, link = ins.target, (pc + 4) & MASK64

        def jal(m):
            write(m, link)
            return target
        return jal
    if mn == "jalr":
        link = (pc + 4) & MASK64

        def jalr(m):
            target = (m.regs[rs1] + imm) & MASK64 & ~1
            write(m, link)
            return target
        return jalr
    if mn == "ecall":
        return lambda m: m.syscall(pc)
    if mn == "ebreak":
        def ebreak(m):
            raise _Halt(0)
        return ebreak
    if mn == "fence":
        return lambda m: None
    raise Trap(f"unsupported instruction {mn}", pc)


class Interpreter:
    def __init__(self, image: ProgramImage, blocks: Sequence[BasicBlock], memory_size: int = DEFAULT_MEMORY):
        self.image = image
        self.blocks = {b.start_address: b for b in blocks}
        self.code = {b.start_address: [_compile(i) for i in b.instructions] for b in blocks}
        self.memory_size = memory_size
        # start address -> executor(machine) -> (next pc or None, cycles)
        self.overrides: dict = {}

    def run(self, max_steps: int = DEFAULT_MAX_STEPS):
        """Execute to completion; returns (Profile, machine, cycles)."""
        m = Machine(self.image, self.memory_size)
        counts = {a: 0 for a in self.blocks}
        sizes = {a: len(b) for a, b in self.blocks.items()}
        steps = cycles = 0
        exit_code = None
        try:
            while True:
                pc = m.pc
                block = self.blocks.get(pc)
                if block is None:
                    raise Trap("control transfer to an address that is not a block leader", pc)
                if steps + len(block) > max_steps:
                    raise StepLimitExceeded(f"step limit of {max_steps} exceeded at pc=0x{pc:x}")
                counts[pc] += 1
                steps += len(block)
                override = self.overrides.get(pc)
                if override is not None:
                    nxt, c = override(m)
                    cycles += c
                else:
                    cycles += len(block)
                    nxt = None
                    for execute in self.code[pc]:
                        nxt = execute(m)
                if nxt is None:
                    nxt = block.end_address
                m.pc = nxt
        except _Halt as halt:
            exit_code = halt.code
        profile = Profile(counts, sizes, exit_code, bytes(m.stdout), steps)
        return profile, m, cycles


def run_and_profile(image: ProgramImage, blocks: Sequence[BasicBlock], max_steps: int = DEFAULT_MAX_STEPS,
                    memory_size: int = DEFAULT_MEMORY) -> Profile:
    return Interpreter(image, blocks, memory_size).run(max_steps)[0]


def uniform_profile(blocks: Sequence[BasicBlock]) -> Profile:
    return Profile({b.start_address: 1 for b in blocks}, {b.start_address: len(b) for b in blocks})


_PROFILE_LINE = re.compile(r"^([0-9a-fA-F]+)\s+(\d+)$")


def parse_profile(text: str, blocks: Sequence[BasicBlock]) -> Profile:
    leaders = {b.start_address: len(b) for b in blocks}
    counts = {a: 0 for a in leaders}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = _PROFILE_LINE.match(body)
        if not m:
            raise ProfileError(f"profile line {lineno}: expected 'HEXADDR COUNT', got {line.strip()!r}")
        addr, count = int(m.group(1), 16), int(m.group(2))
        if count > MASK64:
            raise ProfileError(f"profile line {lineno}: count {count} overflows 64 bits")
        if addr in seen:
            raise ProfileError(f"profile line {lineno}: duplicate leader 0x{addr:x}")
        if addr not in leaders:
            raise ProfileError(f"profile line {lineno}: 0x{addr:x} is not a block leader")
        seen.add(addr)
        counts[addr] = count
    return Profile(counts, leaders)


def load_profile(path, blocks: Sequence[BasicBlock]) -> Profile:
    path = Path(path)
    if not path.is_file():
        raise ProfileError(f"profile file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ProfileError(f"cannot read profile {path}: {exc}") from None
    return parse_profile(text, blocks)


def format_profile(profile: Profile) -> str:
    return "".join(f"{a:x} {c}\n" for a, c in sorted(profile.counts.items()))


# Fused replay ---------------------------------------------------------------


def quotient_order(dfg: DataFlowGraph, groups: Sequence[int]) -> list[list[int]]:
    """Topological order of the contracted block; each entry lists vertices.

    Ties are broken by the smallest member index, so the order is
    deterministic.  Raises :class:`ProfileError` if the contraction is cyclic.
    """
    n = len(dfg.vertices)
    node_of = list(range(n))
    members: dict[int, list[int]] = {v: [v] for v in range(n)}
    for g, mask in enumerate(groups):
        key = n + g
        members[key] = list(iter_bits(mask))
        for v in members[key]:
            node_of[v] = key
            members.pop(v, None)
    succ: dict[int, set] = {k: set() for k in members}
    indeg = {k: 0 for k in members}
    for u in range(n):
        for w in iter_bits(dfg.flow[u]):
            a, b = node_of[u], node_of[w]
            if a != b and b not in succ[a]:
                succ[a].add(b)
                indeg[b] += 1
    heap = [(members[k][0], k) for k, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, k = heapq.heappop(heap)
        order.append(members[k])
        for s in succ[k]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, (members[s][0], s))
    if len(order) != len(members):
        raise ProfileError(f"block {dfg.bb_id}: fused occurrences form a cycle")
    return order


def _fused_executor(block: BasicBlock, dfg: DataFlowGraph, groups: Sequence[int]):
    """Block executor evaluating vertices by value over the contracted order."""
    order = quotient_order(dfg, groups)
    saved = sum(bin(g).count("1") - 1 for g in groups)
    cycles = len(block) - saved
    last_writer = {}
    for v in dfg.vertices:
        if v.dest is not None:
            last_writer[v.dest] = v.index

    def execute(m: Machine):
        entry = list(m.regs)
        vals = [0] * len(dfg.vertices)
        nxt = None
        system = None

        def operand(o):
            if o.vertex is not None:
                return vals[o.vertex]
            ext = dfg.externals[o.external]
            return entry[ext.reg] if ext.kind == "reg" else ext.value & MASK64

        for node in order:
            for v in node:
                vert = dfg.vertices[v]
                ins = vert.instr
                if ins.mnemonic in ("ecall", "ebreak"):
                    system = ins
                    continue
                ops = {o.slot: operand(o) for o in vert.operands}
                mn, pc = ins.mnemonic, ins.address
                if ins.op.kind == isa.ALU:
                    if mn in ("lui", "auipc"):
                        vals[v] = ops["IMM"] & MASK64
                    else:
                        f = BINARY[ins.op.semantic]
                        vals[v] = f(ops["RS1"], ops["RS2"] if ins.op.has_rs2 else ops["IMM"] & MASK64)
                elif ins.is_load:
                    size, signed = _LOAD_SHAPE[mn]
                    vals[v] = m.load((ops["RS1"] + ops["IMM"]) & MASK64, size, signed, pc)
                elif ins.is_store:
                    m.store((ops["RS1"] + ops["IMM"]) & MASK64, _STORE_SIZE[mn], ops["RS2"], pc)
                elif ins.is_branch:
                    if _BRANCH[mn](ops["RS1"], ops["RS2"]):
                        nxt = ins.target
                elif mn == "jal":
                    vals[v] = (pc + 4) & MASK64
                    nxt = ins.target
                elif mn == "jalr":
                    vals[v] = (pc + 4) & MASK64
                    nxt = (ops["RS1"] + ops["IMM"]) & MASK64 & ~1
        for reg, v in last_writer.items():
            m.regs[reg] = vals[v]
        if system is not None:
            _compile(system)(m)
        return nxt, cycles

    return execute


@dataclass
class ReplayResult:
    cycles: int
    f_total: int
    exit_code: Optional[int]
    stdout: bytes
    state_matches: bool
    plain: Profile = field(repr=False, default=None)


def replay_fused(image: ProgramImage, blocks: Sequence[BasicBlock], dfgs: Mapping[int, DataFlowGraph],
                 covers: Iterable, max_steps: int = DEFAULT_MAX_STEPS,
                 memory_size: int = DEFAULT_MEMORY) -> ReplayResult:
    """Run plainly and with ``covers`` ((bb_id, pattern) pairs) fused.

    Returns the fused dynamic cycle count and whether the fused run ends in
    the same architectural state, exit code and output as the plain run.
    """
    plain_profile, plain_machine, _ = Interpreter(image, blocks, memory_size).run(max_steps)
    groups: dict[int, list[int]] = {}
    for bb, p in covers:
        groups.setdefault(bb, []).append(p.mask)
    fused = Interpreter(image, blocks, memory_size)
    by_id = {b.id: b for b in blocks}
    for bb, masks in groups.items():
        block = by_id[bb]
        fused.overrides[block.start_address] = _fused_executor(block, dfgs[bb], masks)
    fused_profile, fused_machine, cycles = fused.run(max_steps)
    same = (plain_machine.regs == fused_machine.regs and plain_machine.mem == fused_machine.mem
            and plain_profile.exit_code == fused_profile.exit_code
            and plain_profile.stdout == fused_profile.stdout
            and plain_profile.counts == fused_profile.counts)
    return ReplayResult(cycles, plain_profile.f_total, fused_profile.exit_code, fused_profile.stdout, same,
                        plain_profile)
