"""RV64IM integer semantics over unsigned 64-bit Python ints."""

from __future__ import annotations

from .isa import CATALOG, MASK64

MASK32 = 0xFFFF_FFFF
_MIN64 = 1 << 63


def s64(x: int) -> int:
    return x - (1 << 64) if x & _MIN64 else x


def s32(x: int) -> int:
    x &= MASK32
    return x - (1 << 32) if x & 0x8000_0000 else x


def sext32(x: int) -> int:
    return s32(x) & MASK64


def _div(a, b):
    if b == 0:
        return MASK64
    a, b = s64(a), s64(b)
    if a == -_MIN64 and b == -1:
        return _MIN64
    q = abs(a) // abs(b)
    return (-q if (a < 0) != (b < 0) else q) & MASK64


def _rem(a, b):
    if b == 0:
        return a
    sa, sb = s64(a), s64(b)
    if sa == -_MIN64 and sb == -1:
        return 0
    r = abs(sa) % abs(sb)
    return (-r if sa < 0 else r) & MASK64


def _divw(a, b):
    a, b = s32(a), s32(b)
    if b == 0:
        return MASK64
    if a == -(1 << 31) and b == -1:
        return sext32(a)
    q = abs(a) // abs(b)
    return sext32(-q if (a < 0) != (b < 0) else q)


def _remw(a, b):
    a, b = s32(a), s32(b)
    if b == 0:
        return sext32(a)
    if a == -(1 << 31) and b == -1:
        return 0
    r = abs(a) % abs(b)
    return sext32(-r if a < 0 else r)


def _divuw(a, b):
    a, b = a & MASK32, b & MASK32
    return MASK64 if b == 0 else sext32(a // b)


def _remuw(a, b):
    a, b = a & MASK32, b & MASK32
    return sext32(a) if b == 0 else sext32(a % b)


BINARY = {
    "add": lambda a, b: (a + b) & MASK64,
    "sub": lambda a, b: (a - b) & MASK64,
    "sll": lambda a, b: (a << (b & 63)) & MASK64,
    "srl": lambda a, b: a >> (b & 63),
    "sra": lambda a, b: (s64(a) >> (b & 63)) & MASK64,
    "slt": lambda a, b: int(s64(a) < s64(b)),
    "sltu": lambda a, b: int(a < b),
    "xor": lambda a, b: a ^ b,
    "or": lambda a, b: a | b,
    "and": lambda a, b: a & b,
    "mul": lambda a, b: (a * b) & MASK64,
    "mulh": lambda a, b: ((s64(a) * s64(b)) >> 64) & MASK64,
    "mulhsu": lambda a, b: ((s64(a) * b) >> 64) & MASK64,
    "mulhu": lambda a, b: (a * b) >> 64,
    "div": _div,
    "divu": lambda a, b: MASK64 if b == 0 else a // b,
    "rem": _rem,
    "remu": lambda a, b: a if b == 0 else a % b,
    "addw": lambda a, b: sext32(a + b),
    "subw": lambda a, b: sext32(a - b),
    "sllw": lambda a, b: sext32(a << (b & 31)),
    "srlw": lambda a, b: sext32((a & MASK32) >> (b & 31)),
    "sraw": lambda a, b: sext32(s32(a) >> (b & 31)),
    "mulw": lambda a, b: sext32(a * b),
    "divw": _divw,
    "divuw": _divuw,
    "remw": _remw,
    "remuw": _remuw,
}


def evaluate(mnemonic: str, operands: dict[str, int]) -> int:
    """Result of one ALU operation given its operand values by slot.

    ``operands`` maps slot names (RS1, RS2, IMM) to values; immediates are
    taken modulo 2**64.  ``lui``/``auipc`` return their IMM operand, which
    for auipc already includes the instruction address.
    """
    op = CATALOG[mnemonic]
    if mnemonic in ("lui", "auipc"):
        return operands["IMM"] & MASK64
    a = operands["RS1"] & MASK64
    b = operands["RS2" if op.has_rs2 else "IMM"] & MASK64
    return BINARY[op.semantic](a, b)
