"""Model, graph and report emission.

Model files use a small text format loosely modelled on nML records with
PDG-like bodies::

    instruction cid_0
    template R2_1_REG
    opcode 0b0001011
    funct3 0
    shape in=2 imm=0 out=1
    cf <hex>
    field funct7 31:25 const 0
    field rs2 24:20 operand in1
    ...
    semantics {
      t0 = and(in0, in1);
      t1 = ori(t0, 0x3f);
      out0 = t1;
    }

Body lines are straight-line assignments in topological order.  Operation
names are RV64IM mnemonics with their usual operand order (RS1, then RS2 or
IMM); ``inN`` are register inputs, ``imm`` is the immediate operand, and
hexadecimal literals are hardcoded immediates.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import isa
from .canonizer import KIND_IMM, KIND_INPUT, KIND_OP, SLOT_CODE, IsoClass
from .encoding import TEMPLATES, Encoding, EncodingAllocator
from .errors import EncodingExhausted
from .program_graph import DataFlowGraph, iter_bits
from .semantics import evaluate

MODEL_VERSION = 1


def _lit(value: int) -> str:
    return f"{value:#x}" if value >= 0 else f"-{-value:#x}"


@dataclass(frozen=True)
class Body:
    lines: tuple  # (target, mnemonic, args) and ("outN", None, (source,))
    inputs: tuple  # input names in order
    has_imm: bool
    outputs: tuple  # output names


def class_body(cls: IsoClass) -> Body:
    """Straight-line semantics of a class, derived from its canonical form."""
    labels, edges = cls.cf.labels, cls.cf.edges
    names = {}
    n_in = 0
    for pos, lab in enumerate(labels):
        if lab[0] == KIND_INPUT:
            names[pos] = f"in{n_in}"
            n_in += 1
        elif lab[0] == KIND_IMM:
            names[pos] = "imm"
    ops = [pos for pos, lab in enumerate(labels) if lab[0] == KIND_OP]
    preds = {pos: [] for pos in ops}
    for s, d, slot in edges:
        preds[d].append((slot, s))
    # Topological order over op nodes, smallest canonical position first.
    order, done = [], set()
    while len(order) < len(ops):
        for pos in ops:
            if pos not in done and all(s in done or labels[s][0] != KIND_OP for _slot, s in preds[pos]):
                order.append(pos)
                done.add(pos)
                break
    lines = []
    for k, pos in enumerate(order):
        names[pos] = f"t{k}"
    c_code = SLOT_CODE["C"]
    for pos in order:
        _, mn_index, _is_out, hard = labels[pos]
        mn = isa.MNEMONICS[mn_index]
        op = isa.CATALOG[mn]
        args_by_slot: dict[int, list[str]] = {}
        for slot, s in sorted(preds[pos]):
            args_by_slot.setdefault(slot, []).append(names[s])
        for slot, value in hard:
            args_by_slot.setdefault(slot, []).append(_lit(value))
        if mn in ("lui", "auipc"):
            slots = [SLOT_CODE["IMM"]]
        elif op.has_rs2:
            slots = [c_code] if c_code in args_by_slot else [SLOT_CODE["RS1"], SLOT_CODE["RS2"]]
        else:
            slots = [SLOT_CODE["RS1"], SLOT_CODE["IMM"]]
        args = [a for slot in slots for a in args_by_slot.get(slot, [])]
        lines.append((names[pos], mn, tuple(args)))
    outputs = []
    for pos in ops:
        if labels[pos][2]:
            out = f"out{len(outputs)}"
            outputs.append(out)
            lines.append((out, None, (names[pos],)))
    return Body(tuple(lines), tuple(f"in{i}" for i in range(n_in)),
                any(lab[0] == KIND_IMM for lab in labels), tuple(outputs))


def render_body(body: Body) -> str:
    out = []
    for target, mn, args in body.lines:
        if mn is None:
            out.append(f"  {target} = {args[0]};")
        else:
            out.append(f"  {target} = {mn}({', '.join(args)});")
    return "\n".join(out)


_BODY_LINE = re.compile(r"^\s*(\w+)\s*=\s*(?:(\w+)\((.*)\)|(\w+))\s*;\s*$")


def evaluate_body(text: str, env: Mapping[str, int]) -> dict[str, int]:
    """Evaluate rendered body lines; returns every assigned name's value."""
    values = dict(env)
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _BODY_LINE.match(line)
        if not m:
            raise ValueError(f"bad body line {line!r}")
        target, mn, args, alias = m.groups()
        if alias is not None:
            values[target] = values[alias]
            continue
        vals = []
        for a in (x.strip() for x in args.split(",")):
            if re.match(r"^-?0x[0-9a-f]+$", a):
                vals.append(int(a, 16))
            else:
                vals.append(values[a])
        op = isa.CATALOG[mn]
        if mn in ("lui", "auipc"):
            operands = {"IMM": vals[0]}
        else:
            operands = {"RS1": vals[0], ("RS2" if op.has_rs2 else "IMM"): vals[1]}
        values[target] = evaluate(mn, operands)
    return values


def instruction_record(index: int, cls: IsoClass, encoding: Encoding) -> str:
    tmpl = TEMPLATES[encoding.template]
    reg_in, imm, out = cls.cf.shape
    if not tmpl.fits(reg_in, imm, out):
        raise EncodingExhausted(f"class {cls.cf.hex()} does not fit template {tmpl.id}")
    body = class_body(cls)
    bind = {"rd": "out0", "rd2": "out1", "rs1": "in0", "rs2": "in1", "rs3": "in2", "imm": "imm"}
    lines = [
        f"instruction cid_{index}",
        f"template {tmpl.id}",
        f"opcode 0b{encoding.opcode:07b}",
    ]
    if encoding.funct3 is not None:
        lines.append(f"funct3 {encoding.funct3}")
    lines += [f"shape in={reg_in} imm={imm} out={out}", f"cf {cls.cf.hex()}"]
    used = set(body.inputs) | set(body.outputs) | ({"imm"} if body.has_imm else set())
    for f in tmpl.fields:
        rng = f"{f.hi}:{f.lo}"
        if f.name == "opcode":
            lines.append(f"field opcode {rng} const 0b{encoding.opcode:07b}")
        elif f.name == "funct3":
            lines.append(f"field funct3 {rng} const {encoding.funct3}")
        elif f.name in bind and bind[f.name] in used:
            lines.append(f"field {f.name} {rng} operand {bind[f.name]}")
        else:
            lines.append(f"field {f.name} {rng} const 0")
    lines.append("semantics {")
    lines.append(render_body(body))
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_semantics(record: str) -> str:
    m = re.search(r"semantics \{\n(.*?)\n\}", record, re.S)
    return m.group(1) if m else ""


def write_model(classes: Sequence[IsoClass], model_dir, encodings: Optional[Sequence[Encoding]] = None) -> list[Path]:
    """Write ``index`` plus one ``cid_<n>.insn`` per class; returns the paths."""
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    if encodings is None:
        alloc = EncodingAllocator()
        encodings = []
        for c in classes:
            width = max((isa.signed_width(p.kept_imm) for _b, p in c.occurrences if p.kept_imm is not None), default=0)
            encodings.append(alloc.allocate(*c.cf.shape, width))
    paths = []
    index = [f"# cidre model v{MODEL_VERSION}", f"instructions {len(classes)}"]
    for n, (cls, enc) in enumerate(zip(classes, encodings)):
        path = model_dir / f"cid_{n}.insn"
        path.write_text(instruction_record(n, cls, enc), encoding="utf-8")
        paths.append(path)
        sel = f"funct3={enc.funct3}" if enc.funct3 is not None else f"opcode=0b{enc.opcode:07b}"
        index.append(f"cid_{n} {enc.template} {sel} size={cls.size} cf={cls.cf.hex()}")
    (model_dir / "index").write_text("\n".join(index) + "\n", encoding="utf-8")
    return [model_dir / "index"] + paths


def emit_model(selection, out_dir) -> list[Path]:
    classes = [s.cls for s in selection.selected]
    encodings = [s.encoding for s in selection.selected]
    return write_model(classes, Path(out_dir) / "model", encodings)


_SHADES = ("#fde0b2", "#c6e2ff", "#d5f5c6", "#f5c6e8", "#e8e8a8", "#c6f5ef")


def emit_dot(dfg: DataFlowGraph, groups: Sequence[int] = (), name: Optional[str] = None) -> str:
    """DOT text for a block DFG; each mask in ``groups`` becomes a shaded cluster."""
    name = name or f"bb{dfg.bb_id}"
    out = [f'digraph "{name}" {{', "  rankdir=TB;", '  node [fontname="monospace"];']
    grouped = {}
    for g, mask in enumerate(groups):
        for v in iter_bits(mask):
            grouped[v] = g
    for g, mask in enumerate(groups):
        out.append(f"  subgraph cluster_{g} {{")
        out.append(f'    style=filled; color="#808080"; fillcolor="{_SHADES[g % len(_SHADES)]}"; label="S{g}";')
        for v in iter_bits(mask):
            out.append(f"    {_vertex_node(dfg, v)}")
        out.append("  }")
    for v in range(len(dfg.vertices)):
        if v not in grouped:
            out.append(f"  {_vertex_node(dfg, v)}")
    for e, ext in enumerate(dfg.externals):
        out.append(f'  e{e} [shape=ellipse, label="{ext.label}"];')
    for v in dfg.vertices:
        for o in v.operands:
            label = o.slot + ("*" if o.commutative else "")
            src = f"v{o.vertex}" if o.vertex is not None else f"e{o.external}"
            out.append(f'  {src} -> v{v.index} [label="{label}"];')
    for a, b in dfg.order_edges:
        out.append(f"  v{a} -> v{b} [style=dashed, color=gray];")
    out.append("}")
    return "\n".join(out) + "\n"


def _vertex_node(dfg: DataFlowGraph, v: int) -> str:
    vert = dfg.vertices[v]
    return f'v{v} [shape=box, label="{vert.mnemonic}\\n0x{vert.address:x}"];'


def emit_class_dots(cls: IsoClass, dfgs: Mapping[int, DataFlowGraph], occurrences=None) -> dict[int, str]:
    """One DOT text per block holding (selected) occurrences of ``cls``."""
    occurrences = cls.occurrences if occurrences is None else occurrences
    by_block: dict[int, list[int]] = {}
    for bb, p in occurrences:
        by_block.setdefault(bb, []).append(p.mask)
    return {bb: emit_dot(dfgs[bb], sorted(masks)) for bb, masks in sorted(by_block.items())}


def emit_graphs(selection, dfgs: Mapping[int, DataFlowGraph], out_dir) -> list[Path]:
    gdir = Path(out_dir) / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for n, s in enumerate(selection.selected):
        for bb, text in emit_class_dots(s.cls, dfgs, s.cover).items():
            path = gdir / f"cid_{n}_bb{bb}.dot"
            path.write_text(text, encoding="utf-8")
            paths.append(path)
    return paths


def number(value) -> float:
    """JSON-friendly rendering of an exact quantity."""
    return round(float(Fraction(value)), 9)


def emit_report(report: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return path
