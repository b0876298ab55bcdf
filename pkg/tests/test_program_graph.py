import random

from cidre.asm import assemble
from cidre.program_graph import BRANCH, JUMP, BasicBlock, build_cfg, build_dfg, iter_bits
from helpers import BASE, block_of, random_instructions

import networkx as nx


def test_straight_line_ending_in_jal_is_one_block():
    blocks = build_cfg(assemble("addi x5, x0, 1\nadd x6, x5, x5\njal x0, 0x80000000\n"))
    assert len(blocks) == 1 and blocks[0].terminator == JUMP


def test_branch_leaders():
    text = """
        addi x5, x0, 3
    top:
        addi x5, x5, -1
        bne  x5, x0, top
        addi x6, x0, 1
    """
    blocks = build_cfg(assemble(text))
    assert [b.start_address for b in blocks] == [BASE, BASE + 4, BASE + 12]
    assert blocks[1].terminator == BRANCH


def test_empty_stream():
    assert build_cfg([]) == []


def test_indirect_jump_warning(caplog):
    build_cfg(assemble("addi x5, x0, 1\njalr x0, 0(x1)\naddi x6, x0, 2\n"))
    assert "indirect jump" in caplog.text


def test_shared_producer_on_both_slots():
    _, dfg = block_of("addi x5, x6, 1\nadd x7, x5, x5\n")
    addi, add = dfg.vertices
    assert [dfg.externals[o.external].kind for o in addi.operands] == ["reg", "imm"]
    assert dfg.externals[addi.operands[0].external].reg == 6
    assert dfg.externals[addi.operands[1].external].value == 1
    assert [(o.slot, o.vertex, o.commutative) for o in add.operands] == [("RS1", 0, True), ("RS2", 0, True)]


def test_last_writer_before_use():
    _, dfg = block_of("addi x5, x0, 1\nadd x6, x5, x7\naddi x5, x0, 2\nadd x8, x5, x7\n")
    assert dfg.vertices[1].operands[0].vertex == 0
    assert dfg.vertices[3].operands[0].vertex == 2
    # x0 reads become immediate zero; x7 is one shared external.
    assert dfg.externals[dfg.vertices[0].operands[0].external].value == 0
    assert dfg.vertices[1].operands[1].external == dfg.vertices[3].operands[1].external


def test_single_instruction_escapes():
    _, dfg = block_of("add x5, x6, x7\n")
    assert len(dfg.vertices) == 1 and dfg.vertices[0].escape


def test_escape_rule():
    _, dfg = block_of("add x5, x6, x7\nadd x5, x5, x6\n")
    assert not dfg.vertices[0].escape  # overwritten and consumed
    assert dfg.vertices[1].escape


def test_memory_ordering_edges():
    _, dfg = block_of("sd x5, 0(x6)\nld x7, 0(x8)\nld x9, 8(x8)\nsd x9, 0(x6)\n")
    assert set(dfg.order_edges) == {(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)}


def _nx(dfg):
    g = nx.DiGraph()
    for v in dfg.vertices:
        g.add_node(("v", v.index), label=v.mnemonic)
    for e, ext in enumerate(dfg.externals):
        g.add_node(("e", e), label="reg" if ext.kind == "reg" else f"imm{ext.value}")
    for v in dfg.vertices:
        for o in v.operands:
            src = ("v", o.vertex) if o.vertex is not None else ("e", o.external)
            g.add_edge(src, ("v", v.index), slot="C" if o.commutative else o.slot)
    return g


def _reschedule(rng, instrs):
    """A random order respecting register RAW/WAR/WAW and memory order."""
    n = len(instrs)
    deps = [set() for _ in range(n)]
    for j in range(n):
        bj = instrs[j]
        reads_j = {r for _s, r in bj.sources()}
        for i in range(j):
            bi = instrs[i]
            reads_i = {r for _s, r in bi.sources()}
            wi = bi.rd if bi.op.has_rd else None
            wj = bj.rd if bj.op.has_rd else None
            mem = (bi.is_load or bi.is_store) and (bj.is_load or bj.is_store) and (bi.is_store or bj.is_store)
            if (wi is not None and (wi in reads_j or wi == wj)) or (wj is not None and wj in reads_i) or mem:
                deps[j].add(i)
    order, done = [], set()
    while len(order) < n:
        ready = [j for j in range(n) if j not in done and deps[j] <= done]
        j = rng.choice(ready)
        order.append(j)
        done.add(j)
    return order


def test_topological_order_and_rebuild_isomorphism():
    rng = random.Random(5)
    for trial in range(100):
        instrs = random_instructions(rng, rng.randrange(1, 16))
        dfg = build_dfg(BasicBlock(0, BASE, tuple(instrs), "end"))
        for v in dfg.vertices:
            assert all(u < v.index for u in iter_bits(dfg.pred[v.index]))
            for o in v.operands:
                if o.external is not None and dfg.externals[o.external].kind == "reg":
                    r = dfg.externals[o.external].reg
                    assert all(w.dest != r for w in dfg.vertices[:v.index])
        order = _reschedule(rng, instrs)
        moved = tuple(
            type(instrs[j])(BASE + 4 * k, instrs[j].mnemonic, instrs[j].rd, instrs[j].rs1, instrs[j].rs2,
                            instrs[j].rs3, instrs[j].imm)
            for k, j in enumerate(order))
        again = build_dfg(BasicBlock(0, BASE, moved, "end"))
        match = lambda a, b: a["label"] == b["label"]  # noqa: E731
        assert nx.is_isomorphic(_nx(dfg), _nx(again), node_match=match,
                                edge_match=lambda a, b: a["slot"] == b["slot"])


def test_blocks_partition_instructions():
    text = open(__file__.replace("test_program_graph.py", "../src/cidre/data/toy.s")).read()
    instrs = assemble(text)
    blocks = build_cfg(instrs)
    assert sum(len(b) for b in blocks) == len(instrs)
    addresses = [i.address for b in blocks for i in b.instructions]
    assert addresses == sorted(i.address for i in instrs)
