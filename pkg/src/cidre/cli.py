"""Command-line driver.

Exit codes: 0 ok, 2 config, 3 decode, 4 profile, 5 enumeration cap,
6 oracle, 7 encoding exhaustion.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import load_config
from .errors import CidreError, ConfigError
from .image import decode_image, load_image
from .isa import disassemble
from .profiler import format_profile

log = logging.getLogger("cidre")


def _input_flags(p, required=True):
    p.add_argument("--input", "-i", required=required, help="program image (ELF64, flat binary or listing)")
    p.add_argument("--format", choices=["elf64", "flat", "listing"], help="input format (default: detect)")
    p.add_argument("--base", help="load address of flat images (default 0x80000000)")
    p.add_argument("--entry", help="entry point of flat/listing images")


def _config_flags(p):
    p.add_argument("--config", "-c", help="config file (default: $CIDRE_CONFIG)")
    p.add_argument("--io", help="I/O shape IN,OUT: 2,1 or 3,1 or 3,2")
    p.add_argument("--umax", type=int, help="maximum number of custom instructions (1..8)")
    p.add_argument("--min-size", type=int, help="minimum pattern size (default 2)")
    p.add_argument("--profile", help="simulate, uniform or file:<path>")
    p.add_argument("--max-steps", type=int, help="interpreter step limit")
    p.add_argument("--jobs", "-j", type=int, help="worker processes for enumeration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cidre", description="Custom-instruction discovery for RV64IM programs")
    parser.add_argument("--version", action="version", version=f"cidre {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: profile, enumerate, select, emit")
    _input_flags(p, required=False)
    _config_flags(p)
    p.add_argument("--out", "-o", help="output directory (default cidre-out)")
    p.add_argument("--strategy", choices=["two-opt", "greedy"])

    p = sub.add_parser("decode", help="print the decoded listing")
    _input_flags(p)

    p = sub.add_parser("graph", help="print the DOT graph of one block")
    _input_flags(p)
    p.add_argument("--block", required=True, help="block id or start address (0x...)")

    p = sub.add_parser("enumerate", help="count patterns and classes")
    _input_flags(p, required=False)
    _config_flags(p)

    p = sub.add_parser("profile", help="run the interpreter and print block counts")
    _input_flags(p)
    p.add_argument("--max-steps", type=int, default=None)

    p = sub.add_parser("verify", help="replay a run with its selection fused")
    p.add_argument("--report", required=True, help="report.json of a previous run")
    return parser


def _overrides(args) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "input.path": get("input"),
        "input.format": get("format"),
        "input.base": get("base"),
        "input.entry": get("entry"),
        "constraints.io": get("io"),
        "constraints.u_max": get("umax"),
        "constraints.min_pattern_size": get("min_size"),
        "profile.source": get("profile"),
        "profile.max_steps": get("max_steps"),
        "output.jobs": get("jobs"),
        "output.dir": get("out"),
        "selection.strategy": get("strategy"),
    }


def _base(args) -> int:
    return int(args.base, 0) if args.base else 0x8000_0000


def _entry(args):
    return int(args.entry, 0) if args.entry else None


def cmd_run(args) -> int:
    from .pipeline import run

    cfg = load_config(args.config, _overrides(args))
    outcome = run(cfg)
    res = outcome.report["results"]
    print(f"patterns {outcome.report['totals']['patterns']}, classes {outcome.report['totals']['classes']}, "
          f"selected {len(outcome.selection.selected)}")
    print(f"cycle speedup {res['cycle_speedup']:.4f}, execution time speedup {res['execution_time_speedup']:.4f}, "
          f"area overhead {res['area_overhead_pct']:.2f}%")
    if outcome.profile.exit_code is not None:
        print(f"program exit code {outcome.profile.exit_code}")
    print(f"report written to {outcome.out_dir / 'report.json'}")
    return 0


def cmd_decode(args) -> int:
    image = load_image(args.input, args.format, _base(args), _entry(args))
    for ins in decode_image(image):
        print(f"{ins.address:08x}: {ins.raw:08x}  # {disassemble(ins)}")
    return 0


def cmd_graph(args) -> int:
    from .emitter import emit_dot
    from .pipeline import load_program

    program = load_program(args.input, args.format, _base(args), _entry(args))
    key = args.block
    if key.lower().startswith("0x"):
        matches = [b for b in program.blocks if b.start_address == int(key, 16)]
    else:
        matches = [b for b in program.blocks if b.id == int(key)]
    if not matches:
        raise ConfigError(f"no block {key}")
    sys.stdout.write(emit_dot(program.dfgs[matches[0].id]))
    return 0


def cmd_enumerate(args) -> int:
    from .canonizer import group_forms
    from .pipeline import enumerate_and_canonize, load_program

    cfg = load_config(args.config, _overrides(args))
    if not cfg.input:
        raise ConfigError("no input program given")
    program = load_program(cfg.input, cfg.format, cfg.base, cfg.entry)
    per_block = enumerate_and_canonize(program.dfgs, cfg.constraints, cfg.jobs)
    for b, forms in zip(program.blocks, per_block):
        print(f"block {b.id} 0x{b.start_address:x}: {len(b)} instructions, {len(forms)} patterns, "
              f"{len({cf.data for cf, _ in forms})} classes")
    classes = group_forms(pair for forms in per_block for pair in forms)
    print(f"total: {sum(len(f) for f in per_block)} patterns, {len(classes)} classes")
    return 0


def cmd_profile(args) -> int:
    from .pipeline import load_program
    from .profiler import DEFAULT_MAX_STEPS, run_and_profile

    program = load_program(args.input, args.format, _base(args), _entry(args))
    profile = run_and_profile(program.image, program.blocks, args.max_steps or DEFAULT_MAX_STEPS)
    sys.stdout.write(format_profile(profile))
    sys.stdout.flush()
    print(f"# f_total {profile.f_total}")
    print(f"# exit code {profile.exit_code}")
    print(f"# stdout {profile.stdout!r}")
    return 0


def cmd_verify(args) -> int:
    from .pipeline import verify

    v = verify(args.report)
    print(f"fused cycles {v.cycles}, expected {v.expected} (f_total {v.f_total})")
    print("exact" if v.exact else "mismatch")
    return 0 if v.exact else 1


COMMANDS = {"run": cmd_run, "decode": cmd_decode, "graph": cmd_graph, "enumerate": cmd_enumerate,
            "profile": cmd_profile, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CidreError as exc:
        print(f"cidre: {exc.stage} error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
