import random

from cidre.canonizer import KIND_INPUT, KIND_OP, canonical_labeling, group
from cidre.emitter import (class_body, emit_class_dots, emit_dot, evaluate_body, instruction_record,
                           parse_semantics, render_body, write_model)
from cidre.encoding import TEMPLATES, EncodingAllocator
from cidre.enumerator import ConstraintConfig, enumerate_patterns, make_pattern
from cidre.semantics import evaluate
from helpers import TWIN_CHAINS, block_of, random_dfg

MASK64 = (1 << 64) - 1


def test_fields_tile_32_bits():
    for t in TEMPLATES.values():
        covered = 0
        for f in t.fields:
            bits = ((1 << f.width) - 1) << f.lo
            assert not covered & bits, (t.id, f.name)
            covered |= bits
        assert covered == 0xFFFF_FFFF, t.id
        for f in t.fields:
            if f.name in ("rd", "rd2", "rs1", "rs2", "rs3"):
                assert f.width == 5
            if f.name == "imm":
                assert f.width in (6, 12)


def test_selectors_unique_per_pool():
    alloc = EncodingAllocator()
    shapes = [(2, 0, 1), (1, 1, 1), (2, 1, 1), (3, 0, 1), (3, 0, 2)] * 3
    encs = [alloc.allocate(*s, 5) for s in shapes]
    seen = set()
    for e in encs:
        key = (e.opcode, e.funct3)
        assert key not in seen
        seen.add(key)


def _class(text, mask, cfg=ConstraintConfig(3, 1)):
    _, dfg = block_of(text)
    return group([make_pattern(dfg, mask, cfg)], {0: dfg})[0]


def test_two_input_record():
    cls = _class("and x5, x6, x7\nor x5, x5, x6\n", 0b11)
    enc = EncodingAllocator().allocate(*cls.cf.shape)
    record = instruction_record(0, cls, enc)
    assert "template R2_1_REG" in record and "opcode 0b0001011" in record
    body = parse_semantics(record).splitlines()
    assert len(body) == 3 and body[-1].strip() == "out0 = t1;"


def test_hardcoded_literal_and_no_imm_field():
    cls = _class("andi x5, x6, 0x3f\nadd x5, x5, x7\n", 0b11)
    assert cls.cf.shape == (2, 0, 1)
    record = instruction_record(0, cls, EncodingAllocator().allocate(*cls.cf.shape))
    assert "0x3f" in parse_semantics(record).lower()
    assert "field imm" not in record


def test_kept_immediate_bound_to_field():
    cls = _class("andi x5, x6, 0x1f\nadd x5, x5, x7\n", 0b11)
    assert cls.cf.shape == (2, 1, 1)
    record = instruction_record(0, cls, EncodingAllocator().allocate(2, 1, 1, 6))
    assert "template R3_1_IMM6" in record and "field imm 31:26 operand imm" in record
    assert "andi(in" in record and ", imm)" in record


def test_empty_model(tmp_path):
    paths = write_model([], tmp_path / "model")
    assert [p.name for p in paths] == ["index"]
    assert "instructions 0" in (tmp_path / "model" / "index").read_text()


def test_dot_single_vertex():
    _, dfg = block_of("add x5, x6, x7\n")
    dot = emit_dot(dfg)
    assert dot.count("shape=box") == 1
    assert "v0 -> v" not in dot


def test_dot_marks_commutative_slots():
    _, dfg = block_of("add x5, x6, x7\nsub x8, x5, x6\n")
    dot = emit_dot(dfg)
    assert 'label="RS1*"' in dot and 'label="RS2*"' in dot
    assert 'v0 -> v1 [label="RS1"]' in dot and 'label="RS2"]' in dot


def test_dot_shades_each_occurrence():
    _, dfg = block_of(TWIN_CHAINS)
    cls = [c for c in group(enumerate_patterns(dfg, ConstraintConfig(3, 1)), {0: dfg}) if c.size == 3][0]
    dot = emit_class_dots(cls, {0: dfg})[0]
    assert dot.count("subgraph cluster_") == 2 and dot.count("style=filled") == 2


def _reference(dfg, p, inputs, rng_values):
    """Evaluate the occurrence instruction by instruction."""
    values = {}
    in_value = {key: rng_values[k] for k, key in enumerate(p.inputs)}
    bound = set(p.imm_operands)
    for v in p.vertices:
        ops = {}
        for o in dfg.vertices[v].operands:
            if o.vertex is not None:
                ops[o.slot] = values[o.vertex] if o.vertex in values else in_value[("v", o.vertex)]
            else:
                ext = dfg.externals[o.external]
                if ext.kind == "reg":
                    ops[o.slot] = in_value[("x", o.external)]
                elif (v, o.slot) in bound:
                    ops[o.slot] = p.kept_imm
                else:
                    ops[o.slot] = ext.value
        values[v] = evaluate(dfg.vertices[v].mnemonic, ops)
    return values


def test_semantic_body_fidelity():
    rng = random.Random(61)
    dfgs = {b: random_dfg(rng, 10, b, p_load=0, p_store=0) for b in range(8)}
    checked = 0
    for shape in [(2, 1), (3, 1), (3, 2)]:
        cfg = ConstraintConfig(*shape, min_pattern_size=1)
        classes = group([p for d in dfgs.values() for p in enumerate_patterns(d, cfg)], dfgs)
        for cls in rng.sample(classes, min(25, len(classes))):
            text = render_body(class_body(cls))
            for bb, p in cls.occurrences[:3]:
                dfg = dfgs[bb]
                cf, keys = canonical_labeling(dfg, p)
                assert cf == cls.cf
                in_names = {}
                out_names = {}
                for pos, lab in enumerate(cf.labels):
                    if lab[0] == KIND_INPUT:
                        in_names[keys[pos][1]] = f"in{len(in_names)}"
                    elif lab[0] == KIND_OP and lab[2]:
                        out_names[keys[pos][1]] = f"out{len(out_names)}"
                for _ in range(1000 // len(cls.occurrences[:3])):
                    vals = [rng.getrandbits(64) if rng.random() < 0.7 else rng.choice([0, 1, MASK64, 1 << 63])
                            for _ in p.inputs]
                    env = {in_names[k]: vals[k] for k in range(len(p.inputs))}
                    if p.kept_imm is not None:
                        env["imm"] = p.kept_imm
                    got = evaluate_body(text, env)
                    ref = _reference(dfg, p, p.inputs, vals)
                    for v, name in out_names.items():
                        assert got[name] == ref[v], (text, name)
                checked += 1
    assert checked > 40


def test_model_and_dot_are_deterministic(tmp_path):
    rng = random.Random(62)
    dfgs = {b: random_dfg(rng, 9, b) for b in range(4)}
    classes = group([p for d in dfgs.values() for p in enumerate_patterns(d, ConstraintConfig(3, 1))], dfgs)[:8]
    a = write_model(classes, tmp_path / "a")
    b = write_model(classes, tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
    assert [emit_class_dots(c, dfgs) for c in classes] == [emit_class_dots(c, dfgs) for c in classes]
