import random
from dataclasses import replace

from cidre import isa
from cidre.canonizer import canonical_form, canonical_labeling, group, iso_check
from cidre.enumerator import ConstraintConfig, enumerate_patterns, make_pattern
from cidre.pipeline import enumerate_and_canonize
from cidre.program_graph import BasicBlock, build_dfg
from helpers import BASE, TWIN_CHAINS, block_of, random_dfg, random_instructions

def _dfg(instrs, bb_id=0):
    instrs = [replace(ins, address=BASE + 4 * k) for k, ins in enumerate(instrs)]
    return build_dfg(BasicBlock(bb_id, BASE, tuple(instrs), "end"))


def _rename(rng, instrs):
    regs = list(range(1, 32))
    perm = dict(zip(regs, rng.sample(regs, len(regs))))
    perm[0] = 0
    f = lambda r: None if r is None else perm[r]  # noqa: E731
    return [replace(i, rd=f(i.rd), rs1=f(i.rs1), rs2=f(i.rs2)) for i in instrs]


def _swap_commutative(rng, instrs):
    return [replace(i, rs1=i.rs2, rs2=i.rs1) if isa.CATALOG[i.mnemonic].commutative and rng.random() < 0.5 else i
            for i in instrs]


def _uses(i):
    return {r for r in (i.rs1, i.rs2) if r is not None}


def _independent(a, b):
    if (a.is_load or a.is_store) and (b.is_load or b.is_store):
        return False
    da, db = a.rd, b.rd
    if da is not None and (da in _uses(b) or da == db):
        return False
    return not (db is not None and db in _uses(a))


def _reschedule(rng, instrs, rounds=40):
    """Random adjacent swaps of independent instructions; returns (instrs, old->new index)."""
    order = list(range(len(instrs)))
    for _ in range(rounds):
        if len(order) < 2:
            break
        k = rng.randrange(len(order) - 1)
        if _independent(instrs[order[k]], instrs[order[k + 1]]):
            order[k], order[k + 1] = order[k + 1], order[k]
    return [instrs[o] for o in order], {old: new for new, old in enumerate(order)}


def _remap(mask, where):
    out = 0
    for v in range(mask.bit_length()):
        if mask >> v & 1:
            out |= 1 << where[v]
    return out


def test_twin_chains_share_a_form():
    _, dfg = block_of(TWIN_CHAINS)
    cfg = ConstraintConfig(3, 1)
    a, b = make_pattern(dfg, 0b000111, cfg), make_pattern(dfg, 0b111000, cfg)
    assert canonical_form(dfg, a) == canonical_form(dfg, b)
    assert iso_check(dfg, a, dfg, b)
    classes = group(enumerate_patterns(dfg, cfg), {0: dfg})
    three = [c for c in classes if c.size == 3]
    assert len(three) == 1 and len(three[0].occurrences) == 2


def test_register_identity_ignored_but_slots_kept():
    # sub reads (a, b) in one block and (b, a) in the other; the add shares a.
    _, d1 = block_of("sub x5, x6, x7\nadd x5, x5, x6\n")
    _, d2 = block_of("sub x5, x7, x6\nadd x5, x5, x6\n")
    cfg = ConstraintConfig(3, 1)
    p1, p2 = make_pattern(d1, 0b11, cfg), make_pattern(d2, 0b11, cfg)
    assert canonical_form(d1, p1) != canonical_form(d2, p2)
    assert not iso_check(d1, p1, d2, p2)
    # With the add reading through a commutative slot, swapping its operands is harmless.
    _, d3 = block_of("sub x5, x6, x7\nadd x5, x6, x5\n")
    p3 = make_pattern(d3, 0b11, cfg)
    assert canonical_form(d1, p1) == canonical_form(d3, p3) and iso_check(d1, p1, d3, p3)


def test_hardcoded_immediates_distinguish_forms():
    cfg = ConstraintConfig(3, 2)  # no immediate slot, so every constant is hardcoded
    _, d1 = block_of("addi x5, x6, 3\nxor x5, x5, x7\n")
    _, d2 = block_of("addi x5, x6, 4\nxor x5, x5, x7\n")
    p1, p2 = make_pattern(d1, 0b11, cfg), make_pattern(d2, 0b11, cfg)
    assert canonical_form(d1, p1) != canonical_form(d2, p2)
    assert not iso_check(d1, p1, d2, p2)


def test_transformed_copies_agree_with_matcher():
    rng = random.Random(21)
    checked = 0
    while checked < 300:
        in_max, out_max = rng.choice([(2, 1), (3, 1), (3, 2)])
        cfg = ConstraintConfig(in_max, out_max, min_pattern_size=1)
        instrs = random_instructions(rng, rng.randrange(2, 11))
        d1 = _dfg(instrs)
        pats = enumerate_patterns(d1, cfg)
        if not pats:
            continue
        moved, where = _reschedule(rng, _swap_commutative(rng, _rename(rng, instrs)))
        d2 = _dfg(moved, 1)
        for p in rng.sample(pats, min(4, len(pats))):
            q = make_pattern(d2, _remap(p.mask, where), cfg)
            assert canonical_form(d1, p) == canonical_form(d2, q)
            assert iso_check(d1, p, d2, q)
            checked += 1


def test_random_pairs_agree_with_matcher():
    rng = random.Random(22)
    agree = equal = 0
    for _ in range(120):
        in_max, out_max = rng.choice([(2, 1), (3, 1), (3, 2)])
        cfg = ConstraintConfig(in_max, out_max, min_pattern_size=1)
        d1, d2 = random_dfg(rng, rng.randrange(2, 10), regs=4), random_dfg(rng, rng.randrange(2, 10), 1, regs=4)
        p1s, p2s = enumerate_patterns(d1, cfg), enumerate_patterns(d2, cfg)
        if not p1s or not p2s:
            continue
        for _ in range(6):
            a, b = rng.choice(p1s), rng.choice(p2s)
            same = canonical_form(d1, a) == canonical_form(d2, b)
            assert same == iso_check(d1, a, d2, b)
            agree += 1
            equal += same
    assert agree >= 500
    assert 0 < equal < agree  # both outcomes are exercised


def test_labeling_covers_every_vertex():
    rng = random.Random(23)
    for _ in range(30):
        dfg = random_dfg(rng, 8)
        for p in enumerate_patterns(dfg, ConstraintConfig(3, 2)):
            cf, keys = canonical_labeling(dfg, p)
            ops = [k for k in keys if k[0] == "v"]
            assert sorted(k[1] for k in ops) == list(p.vertices)
            assert cf.size == p.size


def test_group_properties():
    rng = random.Random(24)
    dfgs = {b: random_dfg(rng, 10, b) for b in range(6)}
    cfg = ConstraintConfig(3, 1)
    pats = [(b, p) for b, d in dfgs.items() for p in enumerate_patterns(d, cfg)]
    classes = group([p for _, p in pats], dfgs)
    assert sum(len(c.occurrences) for c in classes) == len(pats)
    assert [c.cf.data for c in classes] == sorted(c.cf.data for c in classes)
    for c in classes:
        b0, r = c.representative
        for b, p in c.occurrences:
            assert p.size == c.size
            assert iso_check(dfgs[b0], r, dfgs[b], p)


def test_parallel_canonization_is_deterministic():
    rng = random.Random(25)
    dfgs = {b: random_dfg(rng, rng.randrange(3, 12), b) for b in range(12)}
    cfg = ConstraintConfig(3, 2)
    one = enumerate_and_canonize(dfgs, cfg, 1)
    many = enumerate_and_canonize(dfgs, cfg, 8)
    assert [[(cf.data, p.mask) for cf, p in f] for f in one] == [[(cf.data, p.mask) for cf, p in f] for f in many]


def _one_edit(rng, instrs):
    """Change one instruction: another mnemonic of its format, or swapped sources."""
    k = rng.randrange(len(instrs))
    ins = instrs[k]
    fmt = isa.CATALOG[ins.mnemonic].fmt
    peers = sorted(m for m, op in isa.CATALOG.items()
                   if op.fmt == fmt and not op.default_forbidden and m != ins.mnemonic)
    if ins.rs2 is not None and rng.random() < 0.5:
        ins = replace(ins, rs1=ins.rs2, rs2=ins.rs1)
    elif peers:
        ins = replace(ins, mnemonic=rng.choice(peers))
    return instrs[:k] + [ins] + instrs[k + 1:]


def test_near_misses_agree_with_matcher():
    rng = random.Random(26)
    checked = differ = 0
    while checked < 300:
        in_max, out_max = rng.choice([(2, 1), (3, 1), (3, 2)])
        cfg = ConstraintConfig(in_max, out_max, min_pattern_size=1)
        instrs = random_instructions(rng, rng.randrange(2, 10), p_load=0, p_store=0)
        d1 = _dfg(instrs)
        d2 = _dfg(_one_edit(rng, _rename(rng, instrs)), 1)
        for p in enumerate_patterns(d1, cfg)[:4]:
            q = make_pattern(d2, p.mask, cfg)
            same = canonical_form(d1, p) == canonical_form(d2, q)
            assert same == iso_check(d1, p, d2, q)
            checked += 1
            differ += not same
    assert differ > 50
