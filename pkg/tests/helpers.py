"""Shared builders for tests: fixtures as assembly and random straight-line blocks."""

from __future__ import annotations

import random

from cidre.asm import assemble
from cidre.isa import Instruction
from cidre.program_graph import BasicBlock, build_cfg, build_dfg

BASE = 0x8000_0000

# Five instructions: a load feeding a sub/add/mul/xor chain.
FIVE_VERTEX = """
    lw   x5, 0(x10)
    sub  x6, x11, x12
    add  x6, x6, x5
    mul  x6, x6, x13
    xor  x6, x6, x14
"""

# Two and/or/add chains over different registers; the second add has its
# operands swapped.
TWIN_CHAINS = """
    and  x5, x6, x7
    or   x5, x5, x6
    add  x5, x5, x7
    and  x12, x13, x14
    or   x12, x12, x13
    add  x12, x14, x12
"""

R_OPS = ["add", "sub", "and", "or", "xor", "sll", "srl", "sra", "slt", "sltu", "mul",
         "addw", "subw", "mulw", "sllw", "mulh", "mulhu", "div", "remu"]
I_OPS = ["addi", "andi", "ori", "xori", "slti", "sltiu", "addiw"]
SH_OPS = ["slli", "srli", "srai"]


def block_of(text: str):
    """The single block of ``text`` and its DFG."""
    blocks = build_cfg(assemble(text, BASE))
    assert len(blocks) == 1
    return blocks[0], build_dfg(blocks[0])


def random_instructions(rng: random.Random, n: int, regs: int = 6, p_load: float = 0.1,
                        p_store: float = 0.05, small_imms: bool = True) -> list[Instruction]:
    """Straight-line RV64IM code over a small register pool."""
    pool = list(range(5, 5 + regs))
    out = []
    for k in range(n):
        addr = BASE + 4 * k
        r = rng.random()
        src = lambda: rng.choice(pool + [0]) if rng.random() < 0.08 else rng.choice(pool)  # noqa: E731
        if r < p_load:
            out.append(Instruction(addr, rng.choice(["lw", "ld"]), rd=rng.choice(pool), rs1=src(), imm=8 * rng.randrange(4)))
        elif r < p_load + p_store:
            out.append(Instruction(addr, "sd", rs1=src(), rs2=src(), imm=8 * rng.randrange(4)))
        elif r < 0.55:
            out.append(Instruction(addr, rng.choice(R_OPS), rd=rng.choice(pool), rs1=src(), rs2=src()))
        elif r < 0.85:
            imm = rng.choice([1, 3, 7, -1, 31, 0x3F, 100, -300, 2047]) if small_imms else rng.randrange(-2048, 2048)
            out.append(Instruction(addr, rng.choice(I_OPS), rd=rng.choice(pool), rs1=src(), imm=imm))
        elif r < 0.95:
            out.append(Instruction(addr, rng.choice(SH_OPS), rd=rng.choice(pool), rs1=src(), imm=rng.randrange(64)))
        else:
            out.append(Instruction(addr, "lui", rd=rng.choice(pool), imm=rng.randrange(-8, 8) << 12))
    return out


def random_dfg(rng: random.Random, n: int, bb_id: int = 0, **kw):
    instrs = random_instructions(rng, n, **kw)
    bb = BasicBlock(bb_id, instrs[0].address, tuple(instrs), "end")
    return build_dfg(bb)
