"""End-to-end driver: load, profile, enumerate, canonize, select, emit."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__
from .canonizer import canonical_form, group_forms
from .config import RunConfig
from .cost_oracle import estimate
from .emitter import emit_graphs, emit_model, emit_report, number
from .enumerator import ConstraintConfig, enumerate_patterns, make_pattern
from .errors import CidreError, ConfigError
from .image import ProgramImage, decode_image, load_image
from .profiler import Profile, load_profile, replay_fused, run_and_profile, uniform_profile
from .program_graph import build_cfg, build_dfg
from .selector import SelectionResult, select

log = logging.getLogger(__name__)

DECISIONS = (
    "memory operations inside a block are ordered by pseudo-dependencies: "
    "a store orders later loads and stores, a load orders the next store, fence counts as a store",
    "a constant feeding several vertices is one kept immediate operand; other constants are hardcoded "
    "and not counted as inputs",
    "a pattern must have at least one output",
    "canonical forms include the (register inputs, kept immediate, outputs) shape",
    "candidates slower than the baseline are dropped only for the current outer selection iteration",
    "a discarded candidate restarts the inner search without testing its exit condition",
    "the (3,2) template uses the eight floating-point major opcodes as its funct3 substitute",
)


@dataclass
class Program:
    image: ProgramImage
    blocks: list
    dfgs: dict  # bb_id -> DataFlowGraph
    n_instructions: int


def load_program(path, fmt=None, base=0x8000_0000, entry=None) -> Program:
    image = load_image(path, fmt, base, entry)
    instrs = decode_image(image)
    blocks = build_cfg(instrs, image.entry)
    return Program(image, blocks, {b.id: build_dfg(b) for b in blocks}, len(instrs))


def collect_profile(cfg: RunConfig, program: Program) -> Profile:
    if cfg.profile == "simulate":
        return run_and_profile(program.image, program.blocks, cfg.max_steps, cfg.memory_size)
    if cfg.profile == "uniform":
        return uniform_profile(program.blocks)
    return load_profile(cfg.profile[len("file:"):], program.blocks)


def _block_forms(args):
    dfg, constraints = args
    return [(canonical_form(dfg, p), p) for p in enumerate_patterns(dfg, constraints)]


def enumerate_and_canonize(dfgs: dict, constraints: ConstraintConfig, jobs: int = 1) -> list[list]:
    """Per block (in id order), the list of (cf, pattern) pairs."""
    work = [(dfgs[k], constraints) for k in sorted(dfgs)]
    if jobs <= 1 or len(work) <= 1:
        return [_block_forms(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_block_forms, work, chunksize=max(1, len(work) // (4 * jobs))))


@dataclass
class RunOutcome:
    program: Program
    profile: Profile
    classes: list
    selection: SelectionResult
    report: dict
    out_dir: Path


def _cover_entry(program: Program, bb: int, p) -> dict:
    dfg = program.dfgs[bb]
    return {"block": f"0x{dfg.start_address:x}",
            "vertices": [f"0x{dfg.vertices[v].address:x}" for v in p.vertices]}


def build_report(cfg: RunConfig, program: Program, profile: Profile, per_block: list,
                 classes: list, selection: SelectionResult) -> dict:
    blocks = []
    freq = profile.by_block_id(program.blocks)
    for b, forms in zip(program.blocks, per_block):
        blocks.append({
            "id": b.id, "start": f"0x{b.start_address:x}", "instructions": len(b),
            "terminator": b.terminator, "count": freq[b.id],
            "patterns": len(forms), "classes": len({cf.data for cf, _p in forms}),
        })
    selected = []
    for n, s in enumerate(selection.selected):
        enc = s.encoding
        selected.append({
            "name": f"cid_{n}", "cf": s.cls.cf.hex(), "size": s.cls.size,
            "shape": {"inputs": s.cls.cf.shape[0], "immediates": s.cls.cf.shape[1], "outputs": s.cls.cf.shape[2]},
            "template": enc.template, "funct3": enc.funct3, "opcode": f"0b{enc.opcode:07b}",
            "merit": s.merit, "occurrences": len(s.cls.occurrences),
            "t_clk_ns": number(s.t_clk), "t_ex_ns": number(s.t_ex),
            "cover": [_cover_entry(program, bb, p) for bb, p in s.cover],
        })
    r = selection
    return {
        "tool": "cidre",
        "version": __version__,
        "config": cfg.echo(),
        "program": {"path": str(Path(cfg.input).resolve()), "format": program.image.format,
                    "entry": f"0x{program.image.entry:x}", "instructions": program.n_instructions,
                    "blocks": len(program.blocks)},
        "profile": {"source": cfg.profile, "f_total": profile.f_total, "exit_code": profile.exit_code,
                    "stdout": profile.stdout.decode("latin-1")},
        "blocks": blocks,
        "totals": {"patterns": sum(len(f) for f in per_block), "classes": len(classes)},
        "selection": {"strategy": r.strategy, "selected": selected, "log": r.log},
        "results": {
            "t_clk_base_ns": number(r.t_clk_base), "t_clk_custom_ns": number(r.t_clk_custom),
            "clock_period_increase_pct": number((r.t_clk_custom / r.t_clk_base - 1) * 100),
            "f_base": r.f_total, "f_custom": r.f_custom, "total_merit": r.total_merit,
            "t_ex_base_ns": number(r.t_ex_base), "t_ex_custom_ns": number(r.t_ex_custom),
            "cycle_speedup": number(r.cycle_speedup), "execution_time_speedup": number(r.speedup),
            "area_base": number(r.area_base), "area_custom": number(r.area_custom),
            "area_overhead_pct": number(r.area_overhead_pct),
        },
        "decisions": list(DECISIONS),
    }


def run(cfg: RunConfig) -> RunOutcome:
    if not cfg.input:
        raise ConfigError("no input program given")
    program = load_program(cfg.input, cfg.format, cfg.base, cfg.entry)
    profile = collect_profile(cfg, program)
    log.info("profile: f_total=%d over %d blocks", profile.f_total, len(program.blocks))
    per_block = enumerate_and_canonize(program.dfgs, cfg.constraints, cfg.jobs)
    classes = group_forms(pair for forms in per_block for pair in forms)
    log.info("%d patterns in %d classes", sum(len(f) for f in per_block), len(classes))
    freq = profile.by_block_id(program.blocks)
    selection = select(classes, freq, profile.f_total, program.dfgs, cfg.constraints, cfg.oracle,
                       cfg.strategy, estimate)
    report = build_report(cfg, program, profile, per_block, classes, selection)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    emit_model(selection, out)
    emit_graphs(selection, program.dfgs, out)
    emit_report(report, out / "report.json")
    return RunOutcome(program, profile, classes, selection, report, out)


@dataclass
class VerifyOutcome:
    exact: bool
    cycles: int
    expected: int
    f_total: int
    state_matches: bool
    report_matches: Optional[bool]


def covers_from_report(report: dict, program: Program, constraints: ConstraintConfig) -> list:
    by_start = {b.start_address: b.id for b in program.blocks}
    covers = []
    for s in report["selection"]["selected"]:
        for c in s["cover"]:
            start = int(c["block"], 16)
            if start not in by_start:
                raise CidreError(f"report block {c['block']} is not a block of the program")
            bb = by_start[start]
            index = {v.address: v.index for v in program.dfgs[bb].vertices}
            mask = 0
            for a in c["vertices"]:
                mask |= 1 << index[int(a, 16)]
            covers.append((bb, make_pattern(program.dfgs[bb], mask, constraints)))
    return covers


def verify(report_path, max_steps: Optional[int] = None) -> VerifyOutcome:
    """Replay the program with the report's occurrences fused.

    Exact means the fused cycle count equals f_total minus the summed
    savings, the fused run ends in the same state as the plain run and,
    for simulated profiles, both numbers equal those in the report.
    """
    report = json.loads(Path(report_path).read_text(encoding="utf-8"))
    conf = report["config"]
    inp = conf["input"]
    program = load_program(report["program"]["path"], inp["format"], int(inp["base"], 16),
                           None if inp["entry"] is None else int(inp["entry"], 16))
    io = conf["constraints"]["io"]
    constraints = ConstraintConfig(in_max=io[0], out_max=io[1], u_max=conf["constraints"]["u_max"],
                                   forbidden=frozenset(conf["constraints"]["forbidden"]),
                                   min_pattern_size=conf["constraints"]["min_pattern_size"],
                                   max_components=conf["constraints"]["max_components"])
    covers = covers_from_report(report, program, constraints)
    steps = max_steps or conf["profile"]["max_steps"]
    replay = replay_fused(program.image, program.blocks, program.dfgs, covers, steps,
                          conf["profile"]["memory_size"])
    freq = replay.plain.by_block_id(program.blocks)
    expected = replay.f_total - sum((p.size - 1) * freq[bb] for bb, p in covers)
    report_matches = None
    if report["profile"]["source"] == "simulate":
        res = report["results"]
        report_matches = res["f_base"] == replay.f_total and res["f_custom"] == replay.cycles
    exact = replay.cycles == expected and replay.state_matches and report_matches is not False
    return VerifyOutcome(exact, replay.cycles, expected, replay.f_total, replay.state_matches, report_matches)
