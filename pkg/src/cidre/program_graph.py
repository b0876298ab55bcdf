"""Basic-block recovery and per-block data-flow graphs.

Vertex indices of a :class:`DataFlowGraph` follow instruction order inside
the block, so index order is a topological order.  Vertex sets are handled
as Python ints used as bit sets (bit ``i`` = vertex ``i``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import isa
from .isa import Instruction
from .semantics import s64

log = logging.getLogger(__name__)

RS1, RS2, RS3, IMM = "RS1", "RS2", "RS3", "IMM"
SLOTS = (RS1, RS2, RS3, IMM)

BRANCH, JUMP, SYSTEM, FALLTHROUGH, END = "branch", "jump", "system", "fallthrough", "end"


@dataclass(frozen=True)
class BasicBlock:
    id: int
    start_address: int
    instructions: tuple[Instruction, ...]
    terminator: str

    @property
    def end_address(self) -> int:
        return self.instructions[-1].address + 4

    def __len__(self):
        return len(self.instructions)


def _ends_block(ins: Instruction) -> bool:
    return ins.is_branch or ins.is_jump or ins.mnemonic in ("ecall", "ebreak")


def build_cfg(instrs: Sequence[Instruction], entry: Optional[int] = None) -> list[BasicBlock]:
    """Split a decoded instruction stream into basic blocks.

    Leaders are the entry point, the start of every contiguous code region,
    direct branch/jal targets and the successors of control transfers and
    ``ecall``/``ebreak``.
    """
    instrs = sorted(instrs, key=lambda i: i.address)
    if not instrs:
        return []
    addresses = {i.address for i in instrs}
    leaders = {instrs[0].address}
    if entry is not None and entry in addresses:
        leaders.add(entry)
    prev = None
    for ins in instrs:
        if prev is not None and ins.address != prev.address + 4:
            leaders.add(ins.address)
        if _ends_block(ins):
            if ins.address + 4 in addresses:
                leaders.add(ins.address + 4)
            target = ins.target
            if target is not None and target in addresses:
                leaders.add(target)
        prev = ins

    blocks = []
    current: list[Instruction] = []

    def close(next_addr):
        last = current[-1]
        if last.is_branch:
            kind = BRANCH
        elif last.is_jump:
            kind = JUMP
        elif last.mnemonic in ("ecall", "ebreak"):
            kind = SYSTEM
        elif next_addr == last.address + 4:
            kind = FALLTHROUGH
        else:
            kind = END
        blocks.append(BasicBlock(len(blocks), current[0].address, tuple(current), kind))

    for ins in instrs:
        if current and ins.address in leaders:
            close(ins.address)
            current = []
        current.append(ins)
    close(None)
    for warning in cfg_warnings(blocks):
        log.warning(warning)
    return blocks


def cfg_warnings(blocks: Sequence[BasicBlock]) -> list[str]:
    return [
        f"block 0x{b.start_address:x}: indirect jump at 0x{b.instructions[-1].address:x} not resolved"
        for b in blocks
        if b.instructions[-1].mnemonic == "jalr"
    ]


@dataclass(frozen=True)
class External:
    """A source outside the block: a live-in register or an immediate."""

    kind: str  # "reg" or "imm"
    reg: Optional[int] = None
    value: Optional[int] = None

    @property
    def width(self) -> Optional[int]:
        return None if self.value is None else isa.signed_width(self.value)

    @property
    def label(self) -> str:
        return f"x{self.reg}" if self.kind == "reg" else f"{self.value:#x}" if self.value >= 0 else f"-{-self.value:#x}"


@dataclass(frozen=True)
class Operand:
    slot: str
    vertex: Optional[int] = None
    external: Optional[int] = None
    commutative: bool = False


@dataclass(frozen=True)
class Vertex:
    index: int
    instr: Instruction
    operands: tuple[Operand, ...]
    dest: Optional[int]
    escape: bool

    @property
    def mnemonic(self) -> str:
        return self.instr.mnemonic

    @property
    def address(self) -> int:
        return self.instr.address


@dataclass
class DataFlowGraph:
    bb_id: int
    start_address: int
    vertices: tuple[Vertex, ...]
    externals: tuple[External, ...]
    # Memory-ordering pseudo-dependencies (producer, consumer).
    order_edges: tuple[tuple[int, int], ...] = ()
    succ: list[int] = field(init=False, repr=False)
    pred: list[int] = field(init=False, repr=False)
    desc: list[int] = field(init=False, repr=False)
    anc: list[int] = field(init=False, repr=False)
    flow: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.vertices)
        self.succ = [0] * n  # data consumers
        self.pred = [0] * n  # data producers
        for v in self.vertices:
            for o in v.operands:
                if o.vertex is not None:
                    self.succ[o.vertex] |= 1 << v.index
                    self.pred[v.index] |= 1 << o.vertex
        flow = list(self.succ)  # data + ordering successors
        for a, b in self.order_edges:
            flow[a] |= 1 << b
        self.desc = [0] * n
        for i in reversed(range(n)):
            d = 0
            m = flow[i]
            while m:
                low = m & -m
                j = low.bit_length() - 1
                d |= low | self.desc[j]
                m ^= low
            self.desc[i] = d
        self.anc = [0] * n
        for i in range(n):
            m = self.desc[i]
            while m:
                low = m & -m
                self.anc[low.bit_length() - 1] |= 1 << i
                m ^= low
        self.flow = flow

    def __len__(self):
        return len(self.vertices)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.vertices)) - 1

    def edges(self):
        """Data edges as (producer, consumer, slot, commutative)."""
        for v in self.vertices:
            for o in v.operands:
                if o.vertex is not None:
                    yield o.vertex, v.index, o.slot, o.commutative


def _commutative_slot(instr: Instruction, slot: str) -> bool:
    return instr.op.commutative and slot in (RS1, RS2)


def _memory_like(ins: Instruction) -> str:
    if ins.is_load:
        return "load"
    if ins.is_store or ins.mnemonic == "fence":
        return "store"
    return ""


def build_dfg(bb: BasicBlock) -> DataFlowGraph:
    """Build the data-flow graph of one basic block.

    Reads of x0 become immediate-0 externals; register reads without an
    in-block writer become shared register externals.  A vertex escapes when
    its destination is never overwritten before block end or when it has no
    in-block consumer.
    """
    externals: list[External] = []
    reg_external: dict[int, int] = {}
    last_writer: dict[int, int] = {}
    vertices_ops = []
    dests = []
    order = []
    last_store = None
    loads_since_store: list[int] = []

    def new_external(ext):
        externals.append(ext)
        return len(externals) - 1

    for index, ins in enumerate(bb.instructions):
        ops = []
        if ins.mnemonic != "fence":
            for slot, r in ins.sources():
                comm = _commutative_slot(ins, slot)
                if r == 0:
                    ops.append(Operand(slot, external=new_external(External("imm", value=0)), commutative=comm))
                elif r in last_writer:
                    ops.append(Operand(slot, vertex=last_writer[r], commutative=comm))
                else:
                    if r not in reg_external:
                        reg_external[r] = new_external(External("reg", reg=r))
                    ops.append(Operand(slot, external=reg_external[r], commutative=comm))
            if ins.op.has_imm:
                value = ins.imm
                if ins.mnemonic == "auipc":
                    value = s64((ins.address + ins.imm) & isa.MASK64)
                ops.append(Operand(IMM, external=new_external(External("imm", value=value))))
        vertices_ops.append(tuple(ops))

        kind = _memory_like(ins)
        if kind == "load":
            if last_store is not None:
                order.append((last_store, index))
            loads_since_store.append(index)
        elif kind == "store":
            if last_store is not None:
                order.append((last_store, index))
            order.extend((ld, index) for ld in loads_since_store)
            last_store = index
            loads_since_store = []

        dest = ins.rd if ins.op.has_rd and ins.rd and ins.mnemonic != "fence" else None
        dests.append(dest)
        if dest is not None:
            last_writer[dest] = index

    n = len(bb.instructions)
    consumers = [0] * n
    for index, ops in enumerate(vertices_ops):
        for o in ops:
            if o.vertex is not None:
                consumers[o.vertex] += 1
    vertices = []
    for index, ins in enumerate(bb.instructions):
        dest = dests[index]
        escape = False
        if dest is not None:
            overwritten = any(dests[j] == dest for j in range(index + 1, n))
            escape = not overwritten or consumers[index] == 0
        vertices.append(Vertex(index, ins, vertices_ops[index], dest, escape))
    return DataFlowGraph(bb.id, bb.start_address, tuple(vertices), tuple(externals), tuple(sorted(set(order))))


def iter_bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low
