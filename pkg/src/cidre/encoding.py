"""Instruction encoding templates for custom instructions.

Five templates cover the supported I/O shapes.  Each template owns a pool of
eight selector values: the 3-bit ``funct3`` field for the four templates
that have one, and for the five-register (3,2) template the eight major
opcodes of the floating-point encoding space, which the baseline core does
not implement and which stand in for the missing funct3 bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import EncodingExhausted

CUSTOM_0 = 0b0001011
CUSTOM_1 = 0b0101011
CUSTOM_3 = 0b1111011
OP_FP = 0b1010011
# LOAD-FP, STORE-FP, FMADD, FMSUB, FNMSUB, FNMADD and OP-FP, OP-FP first.
FP_OPCODES = (OP_FP, 0b0000111, 0b0100111, 0b1000011, 0b1000111, 0b1001011, 0b1001111, 0b1010111)


@dataclass(frozen=True)
class Field:
    name: str
    hi: int
    lo: int

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class EncodingTemplate:
    id: str
    opcode: int
    n_regs: int
    n_imms: int
    imm_bits: int
    n_outs: int
    fields: tuple

    @property
    def pool(self) -> str:
        """Templates sharing a pool compete for the same eight selectors."""
        return "FP" if self.id == "R3_2_REG" else f"{self.opcode:07b}"

    @property
    def order_key(self):
        # Smallest capacity first.
        return (self.n_outs, self.n_regs + self.n_imms, self.n_regs)

    def field(self, name) -> Optional[Field]:
        return next((f for f in self.fields if f.name == name), None)

    def fits(self, reg_in: int, imm_kept: int, out: int, imm_width: int = 0) -> bool:
        return (reg_in <= self.n_regs and imm_kept == self.n_imms and out <= self.n_outs
                and (not imm_kept or imm_width <= self.imm_bits))

    def opcode_for(self, selector: int) -> int:
        return FP_OPCODES[selector] if self.id == "R3_2_REG" else self.opcode

    def encode(self, selector: int, values: dict) -> int:
        """Assemble a word; ``values`` maps field names to unsigned field values."""
        values = dict(values)
        values["opcode"] = self.opcode_for(selector)
        if self.field("funct3"):
            values["funct3"] = selector
        word = 0
        for f in self.fields:
            v = values.get(f.name, 0)
            if not 0 <= v < (1 << f.width):
                raise ValueError(f"{self.id}: value {v} does not fit field {f.name}")
            word |= v << f.lo
        return word


def _f(*spec):
    return tuple(Field(n, hi, lo) for n, hi, lo in spec)


TEMPLATES = {
    t.id: t for t in (
        EncodingTemplate("R2_1_REG", CUSTOM_0, 2, 0, 0, 1, _f(
            ("funct7", 31, 25), ("rs2", 24, 20), ("rs1", 19, 15), ("funct3", 14, 12),
            ("rd", 11, 7), ("opcode", 6, 0))),
        EncodingTemplate("R2_1_IMM12", CUSTOM_1, 1, 1, 12, 1, _f(
            ("imm", 31, 20), ("rs1", 19, 15), ("funct3", 14, 12), ("rd", 11, 7), ("opcode", 6, 0))),
        EncodingTemplate("R3_1_REG", CUSTOM_0, 3, 0, 0, 1, _f(
            ("rs3", 31, 27), ("funct2", 26, 25), ("rs2", 24, 20), ("rs1", 19, 15),
            ("funct3", 14, 12), ("rd", 11, 7), ("opcode", 6, 0))),
        EncodingTemplate("R3_1_IMM6", CUSTOM_3, 2, 1, 6, 1, _f(
            ("imm", 31, 26), ("reserved", 25, 25), ("rs2", 24, 20), ("rs1", 19, 15),
            ("funct3", 14, 12), ("rd", 11, 7), ("opcode", 6, 0))),
        EncodingTemplate("R3_2_REG", OP_FP, 3, 0, 0, 2, _f(
            ("rd2", 31, 27), ("rs3", 26, 22), ("rs2", 21, 17), ("rs1", 16, 12),
            ("rd", 11, 7), ("opcode", 6, 0))),
    )
}

TEMPLATE_ORDER = tuple(sorted(TEMPLATES.values(), key=lambda t: (t.order_key, t.id)))


def fitting_templates(reg_in: int, imm_kept: int, out: int, imm_width: int = 0) -> list[EncodingTemplate]:
    return [t for t in TEMPLATE_ORDER if t.fits(reg_in, imm_kept, out, imm_width)]


@dataclass(frozen=True)
class Encoding:
    template: str
    selector: int  # funct3 value, or FP opcode index for R3_2_REG

    @property
    def tmpl(self) -> EncodingTemplate:
        return TEMPLATES[self.template]

    @property
    def opcode(self) -> int:
        return self.tmpl.opcode_for(self.selector)

    @property
    def funct3(self) -> Optional[int]:
        return self.selector if self.tmpl.field("funct3") else None


class EncodingAllocator:
    """Hands out template selectors, smallest fitting template first."""

    def __init__(self):
        self.used: dict[str, list[int]] = {}

    def allocate(self, reg_in: int, imm_kept: int, out: int, imm_width: int = 0) -> Encoding:
        candidates = fitting_templates(reg_in, imm_kept, out, imm_width)
        if not candidates:
            raise EncodingExhausted(
                f"no encoding template fits shape in={reg_in} imm={imm_kept} out={out}")
        for t in candidates:
            taken = self.used.setdefault(t.pool, [])
            if len(taken) < 8:
                selector = next(s for s in range(8) if s not in taken)
                taken.append(selector)
                return Encoding(t.id, selector)
        raise EncodingExhausted(
            f"all 8 selectors used for templates {[t.id for t in candidates]}")
