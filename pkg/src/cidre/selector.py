"""Instruction selection: covering, merit and the synthesis-in-the-loop search.

Each committed occurrence becomes one fused instruction.  Occurrences must be
vertex-disjoint, and contracting every fused occurrence of a block to a
single node must leave the block acyclic, otherwise two custom instructions
would wait on each other.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from . import isa
from .canonizer import IsoClass
from .cost_oracle import CostEstimate, OracleConfig, estimate
from .encoding import Encoding, EncodingAllocator
from .enumerator import ConstraintConfig, SubgraphPattern
from .program_graph import DataFlowGraph, iter_bits

log = logging.getLogger(__name__)

EXACT_COVER_LIMIT = 20


class Occupancy:
    """Fused occurrences per block, as vertex masks."""

    def __init__(self, dfgs: Mapping[int, DataFlowGraph]):
        self.dfgs = dfgs
        self.groups: dict[int, list[int]] = {}
        self.used: dict[int, int] = {}

    def copy(self) -> "Occupancy":
        other = Occupancy(self.dfgs)
        other.groups = {k: list(v) for k, v in self.groups.items()}
        other.used = dict(self.used)
        return other

    def can_add(self, bb: int, mask: int) -> bool:
        if mask & self.used.get(bb, 0):
            return False
        return contraction_acyclic(self.dfgs[bb], self.groups.get(bb, []) + [mask])

    def add(self, bb: int, mask: int) -> None:
        self.groups.setdefault(bb, []).append(mask)
        self.used[bb] = self.used.get(bb, 0) | mask

    def pop(self, bb: int) -> None:
        mask = self.groups[bb].pop()
        self.used[bb] &= ~mask


def contraction_acyclic(dfg: DataFlowGraph, groups: Sequence[int]) -> bool:
    """True when contracting each group to one node keeps ``dfg`` acyclic."""
    n = len(dfg.vertices)
    node = list(range(n))
    for g, mask in enumerate(groups):
        for v in iter_bits(mask):
            node[v] = n + g
    succ: dict[int, set] = {}
    indeg: dict[int, int] = {x: 0 for x in set(node)}
    for u in range(n):
        for w in iter_bits(dfg.flow[u]):
            a, b = node[u], node[w]
            if a != b and b not in succ.setdefault(a, set()):
                succ[a].add(b)
                indeg[b] += 1
    ready = [x for x, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        x = ready.pop()
        seen += 1
        for y in succ.get(x, ()):
            indeg[y] -= 1
            if indeg[y] == 0:
                ready.append(y)
    return seen == len(indeg)


def _cover_block(bb: int, occs: list[SubgraphPattern], occ: Occupancy) -> list[SubgraphPattern]:
    """Largest feasible subset of equal-weight occurrences in one block."""
    occs = [p for p in occs if not p.mask & occ.used.get(bb, 0)]
    if len(occs) > EXACT_COVER_LIMIT:
        chosen = []
        for p in occs:
            if occ.can_add(bb, p.mask):
                occ.add(bb, p.mask)
                chosen.append(p)
        for _ in chosen:
            occ.pop(bb)
        return chosen
    best: list[SubgraphPattern] = []
    chosen: list[SubgraphPattern] = []

    def search(i):
        nonlocal best
        if len(chosen) > len(best):
            best = list(chosen)
        if i == len(occs) or len(chosen) + len(occs) - i <= len(best):
            return
        p = occs[i]
        if occ.can_add(bb, p.mask):
            occ.add(bb, p.mask)
            chosen.append(p)
            search(i + 1)
            chosen.pop()
            occ.pop(bb)
        search(i + 1)

    search(0)
    return best


def feasible_cover(cls: IsoClass, occ: Occupancy, freq: Mapping[int, int]) -> list[tuple[int, SubgraphPattern]]:
    """Maximum-weight feasible occurrence subset of ``cls`` under ``occ``.

    All occurrences of a class in one block weigh the same,
    ``(|S| - 1) * f_BB``, so per block the heaviest subset is the largest
    feasible one.  Blocks are independent.  Exact for up to 20 candidate
    occurrences per block, greedy in address order above that.
    """
    by_block: dict[int, list[SubgraphPattern]] = {}
    for bb, p in cls.occurrences:
        by_block.setdefault(bb, []).append(p)
    cover = []
    for bb in sorted(by_block):
        if not freq.get(bb, 0) or cls.size < 2:
            continue
        occs = sorted(by_block[bb], key=lambda p: p.mask)
        cover.extend((bb, p) for p in _cover_block(bb, occs, occ))
    return cover


def cover_merit(cover, freq: Mapping[int, int]) -> int:
    return sum((p.size - 1) * freq.get(bb, 0) for bb, p in cover)


def commit(occ: Occupancy, cover) -> None:
    for bb, p in cover:
        occ.add(bb, p.mask)


def merit_class(cls: IsoClass, freq: Mapping[int, int], occ: Occupancy) -> int:
    return cover_merit(feasible_cover(cls, occ, freq), freq)


def _sequential_merit(first: IsoClass, second: IsoClass, freq, occ: Occupancy) -> int:
    trial = occ.copy()
    c1 = feasible_cover(first, trial, freq)
    commit(trial, c1)
    return cover_merit(c1, freq) + merit_class(second, freq, trial)


def pair_merit(a: IsoClass, b: IsoClass, freq, occ: Occupancy) -> int:
    return max(_sequential_merit(a, b, freq, occ), _sequential_merit(b, a, freq, occ))


def _prefer(a, b, singles):
    """The member of a pair that is returned: larger merit, then smaller CF."""
    return a if (singles[id(a)], b.cf) > (singles[id(b)], a.cf) else b


def choose_best_greedy(candidates: Sequence[IsoClass], freq, occ: Occupancy) -> Optional[IsoClass]:
    best, best_merit = None, 0
    for c in candidates:
        m = merit_class(c, freq, occ)
        if m > best_merit or (m == best_merit and best is not None and c.cf < best.cf):
            best, best_merit = c, m
    return best


def choose_best_instruction(candidates: Sequence[IsoClass], freq, occ: Occupancy,
                            pairs: bool = True) -> Optional[IsoClass]:
    """Two-optimal choice: best pair by joint merit, return its better member.

    Pairs are ranked by joint merit, then by the singleton merit of the
    returned member, then by its CF (smaller wins).  Candidates without merit
    under ``occ`` are ignored; ``None`` means nothing saves a cycle.
    """
    singles = {id(c): merit_class(c, freq, occ) for c in candidates}
    live = sorted((c for c in candidates if singles[id(c)] > 0), key=lambda c: (-singles[id(c)], c.cf))
    if not live:
        return None
    if len(live) == 1 or not pairs:
        return live[0]
    best_key, best = None, None
    for i, a in enumerate(live[:-1]):
        if best_key is not None and singles[id(a)] + singles[id(live[i + 1])] < best_key[0]:
            break
        for b in live[i + 1:]:
            if best_key is not None and singles[id(a)] + singles[id(b)] < best_key[0]:
                break  # singles are sorted, later partners are no better
            joint = pair_merit(a, b, freq, occ)
            member = _prefer(a, b, singles)
            key = (joint, singles[id(member)], _Reversed(member.cf))
            if best_key is None or key > best_key:
                best_key, best = key, member
    return best


class _Reversed:
    """Inverts ordering so that a smaller CF ranks higher inside a max."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __lt__(self, other):
        return self.value > other.value

    def __gt__(self, other):
        return self.value < other.value

    def __eq__(self, other):
        return self.value == other.value


@dataclass
class SelectedClass:
    cls: IsoClass
    merit: int
    cover: list
    encoding: Optional[Encoding] = None
    t_clk: Fraction = Fraction(0)
    t_ex: Fraction = Fraction(0)


@dataclass
class SelectionState:
    u_selected: list = field(default_factory=list)
    u_candidates: list = field(default_factory=list)
    t_ex_base: Fraction = Fraction(0)
    t_ex_best: Fraction = Fraction(0)
    t_ex_new: Fraction = Fraction(0)
    t_clk_base: Fraction = Fraction(0)
    t_clk_new: Fraction = Fraction(0)
    log: list = field(default_factory=list)


@dataclass
class SelectionResult:
    selected: list  # SelectedClass, in commit order
    f_total: int
    t_clk_base: Fraction
    t_clk_custom: Fraction
    area_base: Fraction
    area_custom: Fraction
    strategy: str = "two-opt"
    log: list = field(default_factory=list)

    @property
    def total_merit(self) -> int:
        return sum(s.merit for s in self.selected)

    @property
    def f_custom(self) -> int:
        return self.f_total - self.total_merit

    @property
    def t_ex_base(self) -> Fraction:
        return self.f_total * self.t_clk_base

    @property
    def t_ex_custom(self) -> Fraction:
        return self.f_custom * self.t_clk_custom

    @property
    def cycle_speedup(self) -> Fraction:
        return Fraction(self.f_total, self.f_custom) if self.f_custom else Fraction(1)

    @property
    def speedup(self) -> Fraction:
        return self.t_ex_base / self.t_ex_custom if self.t_ex_custom else Fraction(1)

    @property
    def area_overhead_pct(self) -> Fraction:
        return (self.area_custom - self.area_base) * 100 / self.area_base if self.area_base else Fraction(0)

    def covers(self):
        for s in self.selected:
            yield from s.cover


def execution_time_speedup(cycle_speedup, clock_increase) -> Fraction:
    """T_base / T_custom from f_base / f_custom and the relative period increase."""
    return Fraction(str(cycle_speedup)) / (1 + Fraction(str(clock_increase)))


def _imm_width(cls: IsoClass) -> int:
    return max((isa.signed_width(p.kept_imm) for _b, p in cls.occurrences if p.kept_imm is not None), default=0)


def select(classes: Sequence[IsoClass], freq: Mapping[int, int], f_total: int,
           dfgs: Mapping[int, DataFlowGraph], cfg: ConstraintConfig, oracle: OracleConfig,
           strategy: str = "two-opt",
           estimator: Callable[[list, OracleConfig], CostEstimate] = estimate) -> SelectionResult:
    """Synthesis-in-the-loop greedy selection.

    Each outer iteration restarts from the full candidate list: the best
    candidate is costed with the oracle, candidates that are slower than
    the baseline are dropped for this iteration, and the search goes on
    while the clock period is above the baseline and the execution time
    keeps improving.  The best candidate seen is then committed.
    """
    if strategy not in ("two-opt", "greedy"):
        raise ValueError(f"unknown strategy {strategy!r}")
    occ = Occupancy(dfgs)
    base = estimator([], oracle)
    state = SelectionState(u_candidates=list(classes), t_clk_base=base.t_clk,
                           t_ex_base=f_total * base.t_clk)
    alloc = EncodingAllocator()
    committed_merit = 0
    cache: dict[tuple, CostEstimate] = {}
    current_est = base

    def cost(extra: IsoClass) -> CostEstimate:
        chosen = [s.cls for s in state.u_selected] + [extra]
        key = tuple(c.cf.data for c in chosen)
        if key not in cache:
            cache[key] = estimator(chosen, oracle)
        return cache[key]

    while len(state.u_selected) < cfg.u_max:
        state.t_ex_best = state.t_ex_base
        u_current = list(state.u_candidates)
        u_best = best_cover = best_est = None
        while True:
            if strategy == "two-opt" and len(state.u_selected) < cfg.u_max - 1:
                u = choose_best_instruction(u_current, freq, occ)
            else:
                u = choose_best_greedy(u_current, freq, occ)
            if u is None:
                break
            cover = feasible_cover(u, occ, freq)
            merit = cover_merit(cover, freq)
            est = cost(u)
            state.t_clk_new = est.t_clk
            state.t_ex_new = (f_total - committed_merit - merit) * est.t_clk
            if state.t_ex_new >= state.t_ex_base:
                state.log.append(f"discard {u.cf.hex()[:16]}: T_ex {float(state.t_ex_new):.6g} >= base")
                u_current.remove(u)
                continue
            if state.t_ex_new < state.t_ex_best:
                state.t_ex_best = state.t_ex_new
                u_best, best_cover, best_est = u, cover, est
                u_current.remove(u)
            if state.t_clk_new == state.t_clk_base or state.t_ex_new >= state.t_ex_best:
                break
        if u_best is None:
            break
        merit = cover_merit(best_cover, freq)
        commit(occ, best_cover)
        committed_merit += merit
        reg_in, imm, out = u_best.cf.shape
        enc = alloc.allocate(reg_in, imm, out, _imm_width(u_best))
        state.u_selected.append(SelectedClass(u_best, merit, best_cover, enc, best_est.t_clk, state.t_ex_best))
        state.u_candidates.remove(u_best)
        current_est = best_est
        state.log.append(
            f"commit {u_best.cf.hex()[:16]}: merit {merit}, T_clk {float(best_est.t_clk):.6g} ns, "
            f"T_ex {float(state.t_ex_best):.6g} ns")

    result = SelectionResult(state.u_selected, f_total, base.t_clk, current_est.t_clk,
                             base.area, current_est.area, strategy, state.log)
    check_result(result, dfgs)
    return result


def check_result(result: SelectionResult, dfgs: Mapping[int, DataFlowGraph]) -> None:
    """Structural checks every selection must pass; raises AssertionError."""
    groups: dict[int, list[int]] = {}
    for bb, p in result.covers():
        groups.setdefault(bb, []).append(p.mask)
    for bb, masks in groups.items():
        union = 0
        for m in masks:
            if union & m:
                raise AssertionError(f"overlapping occurrences in block {bb}")
            union |= m
        if not contraction_acyclic(dfgs[bb], masks):
            raise AssertionError(f"contraction of block {bb} is cyclic")
    if result.selected and result.t_ex_custom > result.t_ex_base:
        raise AssertionError("selection is slower than the baseline")


def exhaustive_optimum(classes: Sequence[IsoClass], freq, dfgs, u_max: int) -> int:
    """Best total merit over all class subsets of size <= u_max (test oracle).

    For each subset, searches every feasible combination of its occurrences.
    """
    best = 0
    for k in range(1, min(u_max, len(classes)) + 1):
        for subset in itertools.combinations(classes, k):
            occs = [(bb, p) for c in subset for bb, p in c.occurrences
                    if freq.get(bb, 0) and p.size > 1]
            occs.sort(key=lambda o: -(o[1].size - 1) * freq[o[0]])
            weights = [(p.size - 1) * freq[bb] for bb, p in occs]
            suffix = list(itertools.accumulate(reversed(weights)))[::-1] + [0]
            occ = Occupancy(dfgs)
            top = 0

            def search(i, total):
                nonlocal top
                top = max(top, total)
                if i == len(occs) or total + suffix[i] <= top:
                    return
                bb, p = occs[i]
                if occ.can_add(bb, p.mask):
                    occ.add(bb, p.mask)
                    search(i + 1, total + weights[i])
                    occ.pop(bb)
                search(i + 1, total)

            search(0, 0)
            best = max(best, top)
    return best
