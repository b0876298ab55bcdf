"""Exhaustive enumeration of convex, I/O-constrained candidate subgraphs.

Patterns are grown from single vertices by adding vertices of decreasing
index, i.e. in reverse topological order.  With that order every vertex
above the lowest member is already decided, which makes the convexity test,
the output count and a lower bound on the input count exact or monotone, so
violating branches are cut without losing any valid pattern.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import isa
from .errors import ConfigError, EnumerationCapError
from .program_graph import DataFlowGraph, iter_bits

SUPPORTED_IO = {(2, 1): (1, 12), (3, 1): (1, 6), (3, 2): (0, 0)}


@dataclass(frozen=True)
class ConstraintConfig:
    in_max: int = 3
    out_max: int = 1
    u_max: int = 8
    forbidden: frozenset = isa.DEFAULT_FORBIDDEN
    min_pattern_size: int = 2
    max_components: int = 2
    max_candidates: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "forbidden", frozenset(self.forbidden))
        if (self.in_max, self.out_max) not in SUPPORTED_IO:
            raise ConfigError(
                f"unsupported I/O shape ({self.in_max},{self.out_max}); "
                f"expected one of {sorted(SUPPORTED_IO)}")
        if not 1 <= self.u_max <= 8:
            raise ConfigError(f"u_max must be in 1..8 (3-bit funct3), got {self.u_max}")
        if self.min_pattern_size < 1:
            raise ConfigError("min_pattern_size must be at least 1")
        if self.max_components < 1:
            raise ConfigError("max_components must be at least 1")
        unknown = self.forbidden - set(isa.CATALOG)
        if unknown:
            raise ConfigError(f"unknown forbidden mnemonics: {sorted(unknown)}")

    @property
    def imm_slots(self) -> int:
        return SUPPORTED_IO[(self.in_max, self.out_max)][0]

    @property
    def imm_width(self) -> int:
        return SUPPORTED_IO[(self.in_max, self.out_max)][1]


@dataclass(frozen=True)
class SubgraphPattern:
    bb_id: int
    mask: int
    # Register-valued sources: ("x", external index) or ("v", vertex index).
    inputs: tuple
    kept_imm: Optional[int]
    imm_operands: tuple  # (vertex, slot) bound to the immediate operand
    hardcoded_imms: tuple  # (vertex, slot, value)
    outputs: tuple
    components: int

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def in_count(self) -> int:
        return len(self.inputs) + (self.kept_imm is not None)

    @property
    def out_count(self) -> int:
        return len(self.outputs)

    @property
    def connected(self) -> bool:
        return self.components == 1

    @property
    def vertices(self) -> tuple:
        return tuple(iter_bits(self.mask))


@dataclass(frozen=True)
class IOCounts:
    in_count: int
    out_count: int
    hardcoded_imms: tuple
    inputs: tuple
    kept_imm: Optional[int]
    imm_operands: tuple
    outputs: tuple


def is_convex(dfg: DataFlowGraph, mask: int) -> bool:
    ancestors = 0
    for v in iter_bits(mask):
        ancestors |= dfg.anc[v]
    outside_between = ancestors & ~mask
    return all(not (dfg.desc[u] & outside_between) for u in iter_bits(mask))


def io_counts(dfg: DataFlowGraph, mask: int, cfg: ConstraintConfig) -> IOCounts:
    """Inputs, outputs and immediate handling of the vertex set ``mask``.

    Register inputs are distinct sources outside the set.  At most
    ``cfg.imm_slots`` immediate values fitting the slot width are kept as an
    operand (widest first, then lowest address); every use of that value
    binds to the operand.  All other immediates are hardcoded and not counted.
    """
    inputs = set()
    imm_uses = []
    for v in iter_bits(mask):
        for o in dfg.vertices[v].operands:
            if o.vertex is not None:
                if not (mask >> o.vertex) & 1:
                    inputs.add(("v", o.vertex))
            else:
                ext = dfg.externals[o.external]
                if ext.kind == "reg":
                    inputs.add(("x", o.external))
                else:
                    imm_uses.append((v, o.slot, ext.value))
    kept = None
    if cfg.imm_slots and len(inputs) < cfg.in_max:
        best = None
        for v, _slot, value in imm_uses:
            width = isa.signed_width(value)
            if width <= cfg.imm_width and (best is None or width > best[0]):
                best = (width, value)
        if best is not None:
            kept = best[1]
    imm_operands = tuple((v, s) for v, s, value in imm_uses if value == kept)
    hardcoded = tuple((v, s, value) for v, s, value in imm_uses if value != kept or kept is None)
    outputs = tuple(
        v for v in iter_bits(mask)
        if dfg.vertices[v].escape or dfg.succ[v] & ~mask
    )
    return IOCounts(
        len(inputs) + (kept is not None), len(outputs), hardcoded,
        tuple(sorted(inputs)), kept, imm_operands, outputs,
    )


def count_components(dfg: DataFlowGraph, mask: int) -> int:
    seen = 0
    count = 0
    for v in iter_bits(mask):
        if (seen >> v) & 1:
            continue
        count += 1
        frontier = 1 << v
        seen |= frontier
        while frontier:
            nxt = 0
            for u in iter_bits(frontier):
                nxt |= (dfg.succ[u] | dfg.pred[u]) & mask
            frontier = nxt & ~seen
            seen |= frontier
    return count


def make_pattern(dfg: DataFlowGraph, mask: int, cfg: ConstraintConfig,
                 components: Optional[int] = None) -> SubgraphPattern:
    io = io_counts(dfg, mask, cfg)
    if components is None:
        components = count_components(dfg, mask)
    return SubgraphPattern(dfg.bb_id, mask, io.inputs, io.kept_imm, io.imm_operands,
                           io.hardcoded_imms, io.outputs, components)


def is_valid(dfg: DataFlowGraph, mask: int, cfg: ConstraintConfig) -> bool:
    """Direct (non-incremental) validity test of one vertex set."""
    if not mask or bin(mask).count("1") < cfg.min_pattern_size:
        return False
    if any(dfg.vertices[v].mnemonic in cfg.forbidden for v in iter_bits(mask)):
        return False
    if not is_convex(dfg, mask):
        return False
    io = io_counts(dfg, mask, cfg)
    if not 1 <= io.out_count <= cfg.out_max or io.in_count > cfg.in_max:
        return False
    return count_components(dfg, mask) <= cfg.max_components


def enumerate_patterns(dfg: DataFlowGraph, cfg: ConstraintConfig) -> list[SubgraphPattern]:
    """All valid patterns of ``dfg``, each exactly once.

    Raises :class:`EnumerationCapError` once more than ``cfg.max_candidates``
    patterns are found in the block.
    """
    n = len(dfg.vertices)
    if n == 0:
        return []
    allowed = [dfg.vertices[v].mnemonic not in cfg.forbidden for v in range(n)]
    forbidden_mask = sum(1 << v for v in range(n) if not allowed[v])
    # Register externals feeding each vertex, as a bit set over externals.
    ext_in = [0] * n
    for v in dfg.vertices:
        for o in v.operands:
            if o.external is not None and dfg.externals[o.external].kind == "reg":
                ext_in[v.index] |= 1 << o.external
    escape = [v.escape for v in dfg.vertices]
    desc, anc, succ, pred = dfg.desc, dfg.anc, dfg.succ, dfg.pred
    in_max, out_max = cfg.in_max, cfg.out_max
    min_size, max_comp, cap = cfg.min_pattern_size, cfg.max_components, cfg.max_candidates
    found: list[SubgraphPattern] = []

    def popcount(x):
        return bin(x).count("1")

    def extend(mask, size, hi, anc_s, n_out, ext_mask, src_mask, comps):
        for j in range(hi - 1, -1, -1):
            if not allowed[j]:
                continue
            if desc[j] & anc_s & ~mask:
                continue  # non-convex for every superset as well
            new_mask = mask | (1 << j)
            out = n_out + (1 if escape[j] or succ[j] & ~new_mask else 0)
            if out > out_max:
                continue
            new_ext = ext_mask | ext_in[j]
            new_src = src_mask | pred[j]
            outside = new_src & ~new_mask
            decided = ~((1 << (j + 1)) - 1) | forbidden_mask
            if popcount(new_ext) + popcount(outside & decided) > in_max:
                continue
            link = succ[j] & mask
            if link:
                merged = 1 << j
                new_comps = []
                for c in comps:
                    if c & link:
                        merged |= c
                    else:
                        new_comps.append(c)
                new_comps.append(merged)
            else:
                new_comps = comps + [1 << j]
            if (size + 1 >= min_size and out >= 1 and len(new_comps) <= max_comp
                    and popcount(new_ext) + popcount(outside) <= in_max):
                found.append(make_pattern(dfg, new_mask, cfg, len(new_comps)))
                if len(found) > cap:
                    raise EnumerationCapError(
                        f"block {dfg.bb_id} (0x{dfg.start_address:x}) exceeds the candidate cap of {cap}")
            extend(new_mask, size + 1, j, anc_s | anc[j], out, new_ext, new_src, new_comps)

    extend(0, 0, n, 0, 0, 0, 0, [])
    return found


def brute_force_patterns(dfg: DataFlowGraph, cfg: ConstraintConfig) -> list[int]:
    """Masks of all valid patterns by testing every subset (small graphs only)."""
    return [m for m in range(1, 1 << len(dfg.vertices)) if is_valid(dfg, m, cfg)]
