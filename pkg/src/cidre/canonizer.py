"""Canonical forms and isomorphism classes of candidate patterns.

A pattern is viewed as a small labeled DAG: operation nodes (mnemonic,
output flag, hardcoded immediates per slot), one node per distinct register
input and one node for the immediate operand.  Operand edges carry their
slot; both register slots of a commutative operation carry the same label
``C`` so swapping them does not change the graph.

The canonical form is the lexicographically smallest encoding over all
vertex orders reachable by individualization and colour refinement.  The
search tree depends only on the graph, never on vertex ids, so isomorphic
patterns produce the same minimum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import isa
from .enumerator import SubgraphPattern
from .program_graph import DataFlowGraph

SLOT_CODE = {"RS1": 0, "RS2": 1, "RS3": 2, "IMM": 3, "C": 4}
SLOT_NAME = {v: k for k, v in SLOT_CODE.items()}

KIND_INPUT, KIND_IMM, KIND_OP = 0, 1, 2


@dataclass(frozen=True)
class PatternView:
    """Operand-level description of a pattern, independent of vertex ids.

    ``operands[i]`` lists ``(slot, commutative, source)`` for internal vertex
    ``vertices[i]``; ``source`` is ``("int", j)`` for internal vertex
    position ``j``, ``("in", k)`` for register input ``k``, ``("imm",)``
    for the immediate operand or ``("hard", value)``.
    """

    vertices: tuple
    mnemonics: tuple
    is_output: tuple
    operands: tuple
    n_inputs: int
    has_imm: bool


def pattern_view(dfg: DataFlowGraph, p: SubgraphPattern) -> PatternView:
    verts = p.vertices
    pos = {v: i for i, v in enumerate(verts)}
    input_pos = {key: k for k, key in enumerate(p.inputs)}
    bound = set(p.imm_operands)
    outputs = set(p.outputs)
    operands = []
    for v in verts:
        ops = []
        for o in dfg.vertices[v].operands:
            if o.vertex is not None:
                src = ("int", pos[o.vertex]) if o.vertex in pos else ("in", input_pos[("v", o.vertex)])
            else:
                ext = dfg.externals[o.external]
                if ext.kind == "reg":
                    src = ("in", input_pos[("x", o.external)])
                elif (v, o.slot) in bound:
                    src = ("imm",)
                else:
                    src = ("hard", ext.value)
            ops.append((o.slot, o.commutative, src))
        operands.append(tuple(ops))
    return PatternView(
        verts,
        tuple(dfg.vertices[v].mnemonic for v in verts),
        tuple(v in outputs for v in verts),
        tuple(operands),
        len(p.inputs),
        p.kept_imm is not None,
    )


@dataclass(frozen=True, order=True)
class CanonicalForm:
    data: bytes
    # Decoded structure in canonical order, used for emission.
    labels: tuple = field(compare=False, default=())
    edges: tuple = field(compare=False, default=())
    shape: tuple = field(compare=False, default=(0, 0, 0))

    def hex(self) -> str:
        return self.data.hex()

    @property
    def size(self) -> int:
        return sum(1 for lab in self.labels if lab[0] == KIND_OP)

    def __hash__(self):
        return hash(self.data)

    def __eq__(self, other):
        return isinstance(other, CanonicalForm) and self.data == other.data


def _graph(view: PatternView):
    """Node labels, edges (src, dst, slot code) and node keys of a view."""
    n_ops = len(view.vertices)
    labels = []
    keys = []
    for i in range(n_ops):
        hard = []
        for slot, comm, src in view.operands[i]:
            if src[0] == "hard":
                hard.append((SLOT_CODE["C" if comm else slot], src[1]))
        labels.append((KIND_OP, isa.MNEMONIC_INDEX[view.mnemonics[i]], int(view.is_output[i]), tuple(sorted(hard))))
        keys.append(("v", view.vertices[i]))
    for k in range(view.n_inputs):
        labels.append((KIND_INPUT,))
        keys.append(("in", k))
    imm_node = None
    if view.has_imm:
        imm_node = len(labels)
        labels.append((KIND_IMM,))
        keys.append(("imm",))
    edges = []
    for i in range(n_ops):
        for slot, comm, src in view.operands[i]:
            code = SLOT_CODE["C" if comm else slot]
            if src[0] == "int":
                edges.append((src[1], i, code))
            elif src[0] == "in":
                edges.append((n_ops + src[1], i, code))
            elif src[0] == "imm":
                edges.append((imm_node, i, code))
    return labels, edges, keys


def _rank(signatures):
    table = {sig: r for r, sig in enumerate(sorted(set(signatures)))}
    return [table[s] for s in signatures]


def _refine(colors, out_adj, in_adj):
    n_classes = len(set(colors))
    while True:
        sigs = [
            (colors[v],
             tuple(sorted((s, colors[d]) for d, s in out_adj[v])),
             tuple(sorted((s, colors[p]) for p, s in in_adj[v])))
            for v in range(len(colors))
        ]
        colors = _rank(sigs)
        count = len(set(colors))
        if count == n_classes:
            return colors
        n_classes = count


def _encode(labels, edges, colors):
    order = sorted(range(len(labels)), key=lambda v: colors[v])
    lab = tuple(labels[v] for v in order)
    edg = tuple(sorted((colors[s], colors[d], c) for s, d, c in edges))
    return (lab, edg), order


def _search(colors, labels, edges, out_adj, in_adj, best):
    n = len(colors)
    if len(set(colors)) == n:
        enc, order = _encode(labels, edges, colors)
        if best[0] is None or enc < best[0]:
            best[0], best[1] = enc, order
        return
    cells = {}
    for v, c in enumerate(colors):
        cells.setdefault(c, []).append(v)
    target = min(c for c, members in cells.items() if len(members) > 1)
    for v in cells[target]:
        split = [(c, 0 if u == v else 1) if c == target else (c, 0) for u, c in enumerate(colors)]
        _search(_refine(_rank(split), out_adj, in_adj), labels, edges, out_adj, in_adj, best)


def _serialize(labels, edges, shape) -> bytes:
    out = bytearray(struct.pack(">HHHH", *shape, len(labels)))
    for lab in labels:
        out.append(lab[0])
        if lab[0] == KIND_OP:
            _, mn, is_out, hard = lab
            out += struct.pack(">BBB", mn, is_out, len(hard))
            for slot, value in hard:
                out += struct.pack(">Bq", slot, value)
    out += struct.pack(">H", len(edges))
    for s, d, c in edges:
        out += struct.pack(">HHB", s, d, c)
    return bytes(out)


def canonical_labeling(dfg: DataFlowGraph, p: SubgraphPattern):
    """Canonical form plus the node key at each canonical position.

    Keys are ``("v", vertex)``, ``("in", input position)`` or ``("imm",)``.
    """
    view = pattern_view(dfg, p)
    labels, edges, keys = _graph(view)
    n = len(labels)
    out_adj = [[] for _ in range(n)]
    in_adj = [[] for _ in range(n)]
    for s, d, c in edges:
        out_adj[s].append((d, c))
        in_adj[d].append((s, c))
    colors = _refine(_rank(labels), out_adj, in_adj)
    best = [None, None]
    _search(colors, labels, edges, out_adj, in_adj, best)
    (lab, edg), order = best
    shape = (view.n_inputs, int(view.has_imm), len(p.outputs))
    cf = CanonicalForm(_serialize(lab, edg, shape), lab, edg, shape)
    return cf, tuple(keys[v] for v in order)


def canonical_form(dfg: DataFlowGraph, p: SubgraphPattern) -> CanonicalForm:
    return canonical_labeling(dfg, p)[0]


def iso_check(dfg1: DataFlowGraph, p1: SubgraphPattern, dfg2: DataFlowGraph, p2: SubgraphPattern) -> bool:
    """Backtracking isomorphism test, independent of the canonical form.

    Looks for a bijection between the operation vertices that preserves
    mnemonics, output flags and operand slots (register slots of commutative
    operations may swap) and induces a bijection of the register inputs.
    """
    a, b = pattern_view(dfg1, p1), pattern_view(dfg2, p2)
    if (len(a.vertices) != len(b.vertices) or a.n_inputs != b.n_inputs
            or a.has_imm != b.has_imm or sum(a.is_output) != sum(b.is_output)):
        return False
    n = len(a.vertices)
    f = [None] * n
    used = [False] * n

    def pairings(ops_a, ops_b, commutative):
        by_slot = {slot: src for slot, _c, src in ops_b}
        if set(by_slot) != {slot for slot, _c, _s in ops_a}:
            return
        yield [(src, by_slot[slot]) for slot, _c, src in ops_a]
        if commutative and "RS1" in by_slot and "RS2" in by_slot:
            swap = {"RS1": "RS2", "RS2": "RS1"}
            yield [(src, by_slot[swap.get(slot, slot)]) for slot, _c, src in ops_a]

    def bind_inputs(pairs, g, ginv):
        g, ginv = dict(g), dict(ginv)
        for sa, sb in pairs:
            if sa[0] != sb[0]:
                return None
            kind = sa[0]
            if kind == "int":
                if f[sa[1]] != sb[1]:
                    return None
            elif kind == "hard":
                if sa[1] != sb[1]:
                    return None
            elif kind == "in":
                if g.get(sa[1], sb[1]) != sb[1] or ginv.get(sb[1], sa[1]) != sa[1]:
                    return None
                g[sa[1]] = sb[1]
                ginv[sb[1]] = sa[1]
        return g, ginv

    def match(i, g, ginv):
        if i == n:
            return True
        for j in range(n):
            if used[j] or a.mnemonics[i] != b.mnemonics[j] or a.is_output[i] != b.is_output[j]:
                continue
            comm = isa.CATALOG[a.mnemonics[i]].commutative
            for pairs in pairings(a.operands[i], b.operands[j], comm):
                bound = bind_inputs(pairs, g, ginv)
                if bound is None:
                    continue
                f[i], used[j] = j, True
                if match(i + 1, *bound):
                    return True
                f[i], used[j] = None, False
        return False

    return match(0, {}, {})


@dataclass
class IsoClass:
    cf: CanonicalForm
    occurrences: list = field(default_factory=list)  # (bb_id, SubgraphPattern)

    @property
    def size(self) -> int:
        return self.occurrences[0][1].size

    @property
    def representative(self):
        return self.occurrences[0]

    @property
    def shape(self):
        return self.cf.shape

    def __repr__(self):
        return f"IsoClass(size={self.size}, occurrences={len(self.occurrences)}, cf={self.cf.hex()[:16]}...)"


def group_forms(pairs: Iterable) -> list[IsoClass]:
    """Group ``(cf, pattern)`` pairs into classes ordered by canonical form."""
    classes: dict[bytes, IsoClass] = {}
    for cf, p in pairs:
        cls = classes.get(cf.data)
        if cls is None:
            cls = classes[cf.data] = IsoClass(cf)
        cls.occurrences.append((p.bb_id, p))
    return [classes[k] for k in sorted(classes)]


def group(patterns: Iterable[SubgraphPattern], dfgs: Mapping[int, DataFlowGraph]) -> list[IsoClass]:
    return group_forms((canonical_form(dfgs[p.bb_id], p), p) for p in patterns)
