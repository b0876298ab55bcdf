"""Minimal RV64IM assembler for fixtures and the bundled toy program.

Accepts one instruction per line, ``label:`` definitions, ``#`` comments,
numeric (xN) and ABI register names, and a handful of pseudo-instructions
(nop, mv, li with a 12-bit value, j, ret).  Branch and jal targets may be
labels or absolute addresses.
"""

from __future__ import annotations

import re

from . import isa
from .errors import EncodeError
from .isa import Instruction

ABI_NAMES = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1",
    "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7",
    "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11",
    "t3", "t4", "t5", "t6",
]
_REGS = {name: i for i, name in enumerate(ABI_NAMES)}
_REGS.update({f"x{i}": i for i in range(32)})
_REGS["fp"] = 8

_MEM = re.compile(r"^(-?\w+)\((\w+)\)$")


def reg(name: str) -> int:
    try:
        return _REGS[name.strip().lower()]
    except KeyError:
        raise EncodeError(f"unknown register {name!r}") from None


def _int(text: str) -> int:
    return int(text.strip(), 0)


def _expand_pseudo(mn, args):
    if mn == "nop":
        return "addi", ["x0", "x0", "0"]
    if mn == "mv":
        return "addi", [args[0], args[1], "0"]
    if mn == "li":
        return "addi", [args[0], "x0", args[1]]
    if mn == "j":
        return "jal", ["x0", args[0]]
    if mn == "ret":
        return "jalr", ["x0", "0(ra)"]
    return mn, args


def _parse(lines):
    """Yield (mnemonic, args, lineno) after stripping labels and comments."""
    labels = {}
    items = []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        while ":" in line:
            label, line = line.split(":", 1)
            labels[label.strip()] = len(items)
            line = line.strip()
        if not line:
            continue
        parts = line.split(None, 1)
        mn = parts[0].lower()
        args = [a.strip() for a in parts[1].split(",")] if len(parts) > 1 else []
        items.append((*_expand_pseudo(mn, args), lineno))
    return items, labels


def assemble(text: str, base: int = 0x8000_0000) -> list[Instruction]:
    items, labels = _parse(text.splitlines())
    out = []
    for index, (mn, args, lineno) in enumerate(items):
        address = base + 4 * index
        try:
            op = isa.CATALOG[mn]
        except KeyError:
            raise EncodeError(f"line {lineno}: unknown mnemonic {mn!r}") from None

        def target(text):
            if text in labels:
                return base + 4 * labels[text] - address
            return _int(text) - address

        fields = {}
        try:
            if op.fmt == isa.SYS:
                pass
            elif op.kind == isa.LOAD or mn == "jalr":
                m = _MEM.match(args[1].replace(" ", ""))
                fields = dict(rd=reg(args[0]), rs1=reg(m.group(2)), imm=_int(m.group(1)))
            elif op.kind == isa.STORE:
                m = _MEM.match(args[1].replace(" ", ""))
                fields = dict(rs2=reg(args[0]), rs1=reg(m.group(2)), imm=_int(m.group(1)))
            elif op.kind == isa.BRANCH:
                fields = dict(rs1=reg(args[0]), rs2=reg(args[1]), imm=target(args[2]))
            elif mn == "jal":
                if len(args) == 1:
                    args = ["ra", args[0]]
                fields = dict(rd=reg(args[0]), imm=target(args[1]))
            elif mn == "fence":
                fields = dict(rd=0, rs1=0, imm=0) if not args else dict(
                    rd=reg(args[0]), rs1=reg(args[1]), imm=_int(args[2]))
            elif op.fmt == isa.U:
                fields = dict(rd=reg(args[0]), imm=isa.sign_extend(_int(args[1]) << 12, 32))
            elif op.fmt == isa.R:
                fields = dict(rd=reg(args[0]), rs1=reg(args[1]), rs2=reg(args[2]))
            else:
                fields = dict(rd=reg(args[0]), rs1=reg(args[1]), imm=_int(args[2]))
        except (IndexError, AttributeError, ValueError) as exc:
            raise EncodeError(f"line {lineno}: malformed operands for {mn}: {exc}") from None
        instr = Instruction(address, mn, **fields)
        try:
            word = isa.encode(instr)
        except EncodeError as exc:
            raise EncodeError(f"line {lineno}: {exc}") from None
        out.append(Instruction(address, mn, **fields, raw=word))
    return out


def to_listing(instrs, comments: bool = True) -> str:
    """Render instructions in the ``HEXADDR: HEXWORD8`` listing format."""
    lines = []
    for ins in instrs:
        line = f"{ins.address:08x}: {ins.raw:08x}"
        if comments:
            line += f"  # {isa.disassemble(ins)}"
        lines.append(line)
    return "\n".join(lines) + "\n"
