"""RV64IM operation catalog, decoder and encoder.

Only standard 32-bit encodings are supported.  Compressed, floating-point and
CSR instructions are rejected with a :class:`DecodeError` instead of being
skipped, because a silently skipped word would corrupt block recovery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .errors import DecodeError, EncodeError, UnsupportedEncoding

MASK64 = (1 << 64) - 1

# Operation kinds.
ALU = "alu"
LOAD = "load"
STORE = "store"
BRANCH = "branch"
JUMP = "jump"
SYSTEM = "system"

# Format classes.  I_SH6/I_SH5 are I-type encodings whose immediate is a
# 6-/5-bit shift amount.
R, I, I_SH6, I_SH5, S, B, U, J, R4, SYS = (
    "R", "I", "I_SH6", "I_SH5", "S", "B", "U", "J", "R4", "SYS",
)

_FORMAT_MASK = {
    R: 0xFE00707F,
    I: 0x0000707F,
    I_SH6: 0xFC00707F,
    I_SH5: 0xFE00707F,
    S: 0x0000707F,
    B: 0x0000707F,
    U: 0x0000007F,
    J: 0x0000007F,
    SYS: 0xFFFFFFFF,
}

# (bits, signed) of the immediate per format.
_IMM_SHAPE = {
    I: (12, True),
    I_SH6: (6, False),
    I_SH5: (5, False),
    S: (12, True),
    B: (13, True),
    U: (32, True),
    J: (21, True),
}

_HAS_RD = {R, I, I_SH6, I_SH5, U, J}
_HAS_RS1 = {R, I, I_SH6, I_SH5, S, B}
_HAS_RS2 = {R, S, B}


@dataclass(frozen=True)
class Operation:
    mnemonic: str
    fmt: str
    match: int
    kind: str = ALU
    commutative: bool = False
    sw_cycles: int = 1
    hw_delay_units: Fraction = Fraction(0)
    area_units: Fraction = Fraction(0)
    # For immediate forms: the register-register operation computing the
    # same function (addi -> add).  None for R-type and non-ALU ops.
    base: Optional[str] = None

    @property
    def mask(self) -> int:
        return _FORMAT_MASK[self.fmt]

    @property
    def default_forbidden(self) -> bool:
        return self.kind != ALU

    @property
    def imm_bits(self) -> Optional[int]:
        shape = _IMM_SHAPE.get(self.fmt)
        return shape[0] if shape else None

    @property
    def imm_signed(self) -> bool:
        shape = _IMM_SHAPE.get(self.fmt)
        return shape[1] if shape else False

    @property
    def has_rd(self) -> bool:
        return self.fmt in _HAS_RD

    @property
    def has_rs1(self) -> bool:
        return self.fmt in _HAS_RS1

    @property
    def has_rs2(self) -> bool:
        return self.fmt in _HAS_RS2

    @property
    def has_imm(self) -> bool:
        return self.fmt in _IMM_SHAPE

    @property
    def semantic(self) -> str:
        """Name of the register-register function this operation computes."""
        return self.base or self.mnemonic


def _r(funct7, funct3, opcode):
    return (funct7 << 25) | (funct3 << 12) | opcode


def _i(funct3, opcode, hi=0):
    return (hi << 26) | (funct3 << 12) | opcode


def _build_catalog():
    F = Fraction
    ops = []

    def add(mn, fmt, match, kind=ALU, comm=False, delay=0, area=0, base=None):
        ops.append(Operation(mn, fmt, match, kind, comm, 1, F(delay), F(area), base))

    # Placeholder, non-physical delays (normalized to a 64-bit add) and areas.
    OP, OP32, OPI, OPI32 = 0x33, 0x3B, 0x13, 0x1B
    add("add", R, _r(0x00, 0, OP), comm=True, delay="1.0", area=10)
    add("sub", R, _r(0x20, 0, OP), delay="1.0", area=10)
    add("sll", R, _r(0x00, 1, OP), delay="0.9", area=12)
    add("slt", R, _r(0x00, 2, OP), delay="1.1", area=10)
    add("sltu", R, _r(0x00, 3, OP), delay="1.1", area=10)
    add("xor", R, _r(0x00, 4, OP), comm=True, delay="0.35", area=3)
    add("srl", R, _r(0x00, 5, OP), delay="0.9", area=12)
    add("sra", R, _r(0x20, 5, OP), delay="0.9", area=12)
    add("or", R, _r(0x00, 6, OP), comm=True, delay="0.35", area=3)
    add("and", R, _r(0x00, 7, OP), comm=True, delay="0.35", area=3)
    add("mul", R, _r(0x01, 0, OP), comm=True, delay="3.5", area=120)
    add("mulh", R, _r(0x01, 1, OP), comm=True, delay="3.5", area=120)
    add("mulhsu", R, _r(0x01, 2, OP), delay="3.5", area=120)
    add("mulhu", R, _r(0x01, 3, OP), comm=True, delay="3.5", area=120)
    add("div", R, _r(0x01, 4, OP), delay="12", area=300)
    add("divu", R, _r(0x01, 5, OP), delay="12", area=300)
    add("rem", R, _r(0x01, 6, OP), delay="12", area=300)
    add("remu", R, _r(0x01, 7, OP), delay="12", area=300)

    add("addw", R, _r(0x00, 0, OP32), comm=True, delay="1.0", area=6)
    add("subw", R, _r(0x20, 0, OP32), delay="1.0", area=6)
    add("sllw", R, _r(0x00, 1, OP32), delay="0.9", area=8)
    add("srlw", R, _r(0x00, 5, OP32), delay="0.9", area=8)
    add("sraw", R, _r(0x20, 5, OP32), delay="0.9", area=8)
    add("mulw", R, _r(0x01, 0, OP32), comm=True, delay="3.5", area=60)
    add("divw", R, _r(0x01, 4, OP32), delay="12", area=150)
    add("divuw", R, _r(0x01, 5, OP32), delay="12", area=150)
    add("remw", R, _r(0x01, 6, OP32), delay="12", area=150)
    add("remuw", R, _r(0x01, 7, OP32), delay="12", area=150)

    add("addi", I, _i(0, OPI), delay="1.0", area=10, base="add")
    add("slti", I, _i(2, OPI), delay="1.1", area=10, base="slt")
    add("sltiu", I, _i(3, OPI), delay="1.1", area=10, base="sltu")
    add("xori", I, _i(4, OPI), delay="0.35", area=3, base="xor")
    add("ori", I, _i(6, OPI), delay="0.35", area=3, base="or")
    add("andi", I, _i(7, OPI), delay="0.35", area=3, base="and")
    add("slli", I_SH6, _i(1, OPI, 0x00), delay="0.9", area=12, base="sll")
    add("srli", I_SH6, _i(5, OPI, 0x00), delay="0.9", area=12, base="srl")
    add("srai", I_SH6, _i(5, OPI, 0x10), delay="0.9", area=12, base="sra")
    add("addiw", I, _i(0, OPI32), delay="1.0", area=6, base="addw")
    add("slliw", I_SH5, _r(0x00, 1, OPI32), delay="0.9", area=8, base="sllw")
    add("srliw", I_SH5, _r(0x00, 5, OPI32), delay="0.9", area=8, base="srlw")
    add("sraiw", I_SH5, _r(0x20, 5, OPI32), delay="0.9", area=8, base="sraw")

    add("lui", U, 0x37, delay="0.05", area=1)
    add("auipc", U, 0x17, delay="0.05", area=1)

    for f3, mn in enumerate(["lb", "lh", "lw", "ld", "lbu", "lhu", "lwu"]):
        add(mn, I, _i(f3, 0x03), kind=LOAD)
    for f3, mn in enumerate(["sb", "sh", "sw", "sd"]):
        add(mn, S, _i(f3, 0x23), kind=STORE)
    for f3, mn in [(0, "beq"), (1, "bne"), (4, "blt"), (5, "bge"), (6, "bltu"), (7, "bgeu")]:
        add(mn, B, _i(f3, 0x63), kind=BRANCH)
    add("jal", J, 0x6F, kind=JUMP)
    add("jalr", I, _i(0, 0x67), kind=JUMP)
    add("fence", I, _i(0, 0x0F), kind=SYSTEM)
    add("ecall", SYS, 0x00000073, kind=SYSTEM)
    add("ebreak", SYS, 0x00100073, kind=SYSTEM)
    return ops


CATALOG: dict[str, Operation] = {op.mnemonic: op for op in _build_catalog()}
MNEMONICS: tuple[str, ...] = tuple(CATALOG)
MNEMONIC_INDEX = {mn: i for i, mn in enumerate(MNEMONICS)}

_BY_OPCODE: dict[int, list[Operation]] = {}
for _op in CATALOG.values():
    _BY_OPCODE.setdefault(_op.match & 0x7F, []).append(_op)

DEFAULT_FORBIDDEN = frozenset(mn for mn, op in CATALOG.items() if op.default_forbidden)


def sign_extend(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    if value >> (bits - 1):
        value -= 1 << bits
    return value


def signed_width(value: int) -> int:
    """Smallest two's-complement bit width that represents ``value``."""
    if value < 0:
        return (-value - 1).bit_length() + 1
    return value.bit_length() + 1


def fits(value: int, bits: int, signed: bool = True) -> bool:
    if signed:
        return -(1 << (bits - 1)) <= value < (1 << (bits - 1))
    return 0 <= value < (1 << bits)


@dataclass(frozen=True)
class Instruction:
    """One decoded RV64IM instruction.

    ``raw`` is excluded from equality so that ``decode(encode(i)) == i`` holds
    for instructions built by hand.
    """

    address: int
    mnemonic: str
    rd: Optional[int] = None
    rs1: Optional[int] = None
    rs2: Optional[int] = None
    rs3: Optional[int] = None
    imm: Optional[int] = None
    raw: int = field(default=0, compare=False)

    @property
    def op(self) -> Operation:
        return CATALOG[self.mnemonic]

    @property
    def imm_width(self) -> Optional[int]:
        return self.op.imm_bits

    @property
    def is_branch(self) -> bool:
        return self.op.kind == BRANCH

    @property
    def is_jump(self) -> bool:
        return self.op.kind == JUMP

    @property
    def is_load(self) -> bool:
        return self.op.kind == LOAD

    @property
    def is_store(self) -> bool:
        return self.op.kind == STORE

    @property
    def is_system(self) -> bool:
        return self.op.kind == SYSTEM

    @property
    def target(self) -> Optional[int]:
        """Statically known control-transfer target (branches and jal)."""
        if self.mnemonic == "jal" or self.is_branch:
            return (self.address + self.imm) & MASK64
        return None

    def sources(self):
        """(slot, register) pairs read by this instruction."""
        out = []
        if self.op.has_rs1:
            out.append(("RS1", self.rs1))
        if self.op.has_rs2:
            out.append(("RS2", self.rs2))
        return out

    def __str__(self):
        return disassemble(self)


def _bits(word, hi, lo):
    return (word >> lo) & ((1 << (hi - lo + 1)) - 1)


def decode(word: int, address: int = 0) -> Instruction:
    """Decode one 32-bit word.

    Raises :class:`UnsupportedEncoding` for compressed encodings and
    :class:`DecodeError` for any other word outside the catalog.
    """
    if not 0 <= word <= 0xFFFFFFFF:
        raise DecodeError("word does not fit 32 bits", word & 0xFFFFFFFF, address)
    if word & 0b11 != 0b11:
        raise UnsupportedEncoding("compressed (16-bit) encoding not supported", word, address)
    if word & 0b11100 == 0b11100:
        raise UnsupportedEncoding("encodings longer than 32 bits not supported", word, address)
    for op in _BY_OPCODE.get(word & 0x7F, ()):
        if word & op.mask == op.match:
            break
    else:
        raise DecodeError("unknown opcode/funct combination", word, address)
    if op.mnemonic == "fence" and (word & 0x000F8F80 or _bits(word, 31, 28) not in (0b0000, 0b1000)):
        raise DecodeError("reserved fence encoding", word, address)

    fmt = op.fmt
    rd = _bits(word, 11, 7) if fmt in _HAS_RD else None
    rs1 = _bits(word, 19, 15) if fmt in _HAS_RS1 else None
    rs2 = _bits(word, 24, 20) if fmt in _HAS_RS2 else None
    imm = None
    if fmt == I:
        imm = sign_extend(_bits(word, 31, 20), 12)
    elif fmt == I_SH6:
        imm = _bits(word, 25, 20)
    elif fmt == I_SH5:
        imm = _bits(word, 24, 20)
    elif fmt == S:
        imm = sign_extend((_bits(word, 31, 25) << 5) | _bits(word, 11, 7), 12)
    elif fmt == B:
        imm = sign_extend(
            (_bits(word, 31, 31) << 12)
            | (_bits(word, 7, 7) << 11)
            | (_bits(word, 30, 25) << 5)
            | (_bits(word, 11, 8) << 1),
            13,
        )
    elif fmt == U:
        imm = sign_extend(word & 0xFFFFF000, 32)
    elif fmt == J:
        imm = sign_extend(
            (_bits(word, 31, 31) << 20)
            | (_bits(word, 19, 12) << 12)
            | (_bits(word, 20, 20) << 11)
            | (_bits(word, 30, 21) << 1),
            21,
        )
    return Instruction(address, op.mnemonic, rd, rs1, rs2, None, imm, raw=word)


def _check_reg(instr, name):
    value = getattr(instr, name)
    if value is None or not 0 <= value <= 31:
        raise EncodeError(f"{instr.mnemonic}: {name}={value!r} is not a register 0-31")
    return value


def encode(instr: Instruction) -> int:
    """Encode ``instr`` back into its 32-bit word."""
    try:
        op = CATALOG[instr.mnemonic]
    except KeyError:
        raise EncodeError(f"unknown mnemonic {instr.mnemonic!r}") from None
    fmt = op.fmt
    word = op.match
    for name, present in (("rd", fmt in _HAS_RD), ("rs1", fmt in _HAS_RS1), ("rs2", fmt in _HAS_RS2)):
        if present:
            _check_reg(instr, name)
        elif getattr(instr, name) is not None:
            raise EncodeError(f"{instr.mnemonic} has no {name} operand")
    if instr.rs3 is not None:
        raise EncodeError(f"{instr.mnemonic} has no rs3 operand")
    if op.has_imm:
        imm = instr.imm
        bits, signed = _IMM_SHAPE[fmt]
        if imm is None or not fits(imm, bits, signed):
            raise EncodeError(f"{instr.mnemonic}: immediate {imm!r} does not fit {bits}-bit field")
        if fmt in (B, J) and imm & 1:
            raise EncodeError(f"{instr.mnemonic}: branch offset {imm} is odd")
        if fmt == U and imm & 0xFFF:
            raise EncodeError(f"{instr.mnemonic}: upper immediate {imm:#x} has low bits set")
    elif instr.imm is not None:
        raise EncodeError(f"{instr.mnemonic} takes no immediate")

    if fmt in _HAS_RD:
        word |= instr.rd << 7
    if fmt in _HAS_RS1:
        word |= instr.rs1 << 15
    if fmt in _HAS_RS2:
        word |= instr.rs2 << 20
    imm = instr.imm
    if fmt == I:
        word |= (imm & 0xFFF) << 20
    elif fmt in (I_SH6, I_SH5):
        word |= imm << 20
    elif fmt == S:
        imm &= 0xFFF
        word |= (imm >> 5) << 25 | (imm & 0x1F) << 7
    elif fmt == B:
        imm &= 0x1FFF
        word |= (
            (imm >> 12) << 31
            | ((imm >> 5) & 0x3F) << 25
            | ((imm >> 1) & 0xF) << 8
            | ((imm >> 11) & 1) << 7
        )
    elif fmt == U:
        word |= imm & 0xFFFFF000
    elif fmt == J:
        imm &= 0x1FFFFF
        word |= (
            (imm >> 20) << 31
            | ((imm >> 1) & 0x3FF) << 21
            | ((imm >> 11) & 1) << 20
            | ((imm >> 12) & 0xFF) << 12
        )
    return word


def disassemble(instr: Instruction) -> str:
    op = instr.op
    mn = instr.mnemonic
    if op.fmt == SYS:
        return mn
    if mn == "fence":
        return f"fence x{instr.rd}, x{instr.rs1}, {instr.imm}"
    if op.kind == LOAD or mn == "jalr":
        return f"{mn} x{instr.rd}, {instr.imm}(x{instr.rs1})"
    if op.kind == STORE:
        return f"{mn} x{instr.rs2}, {instr.imm}(x{instr.rs1})"
    if op.kind == BRANCH:
        return f"{mn} x{instr.rs1}, x{instr.rs2}, 0x{instr.target:x}"
    if mn == "jal":
        return f"jal x{instr.rd}, 0x{instr.target:x}"
    if op.fmt == U:
        return f"{mn} x{instr.rd}, 0x{(instr.imm >> 12) & 0xFFFFF:x}"
    if op.fmt == R:
        return f"{mn} x{instr.rd}, x{instr.rs1}, x{instr.rs2}"
    return f"{mn} x{instr.rd}, x{instr.rs1}, {instr.imm}"
