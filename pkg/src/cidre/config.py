"""Run configuration: sectioned ``key = value`` files plus command-line overrides.

Example file::

    [input]
    path = toy.elf

    [constraints]
    io = 3,1
    u_max = 8

    [oracle]
    t_clk_base = 1.0
    delay.mul = 3.0

Command-line flags always win over file values.  ``CIDRE_CONFIG`` names a
default config file.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import isa
from .cost_oracle import DEFAULT_TEMPLATE_AREA, OracleConfig
from .enumerator import ConstraintConfig
from .errors import ConfigError
from .profiler import DEFAULT_MAX_STEPS, DEFAULT_MEMORY

ENV_CONFIG = "CIDRE_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    input: Optional[str] = None
    format: Optional[str] = None
    base: int = 0x8000_0000
    entry: Optional[int] = None
    profile: str = "simulate"
    max_steps: int = DEFAULT_MAX_STEPS
    memory_size: int = DEFAULT_MEMORY
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    strategy: str = "two-opt"
    output: str = "cidre-out"
    jobs: int = 1
    seed: int = 0
    verbosity: int = 0

    def __post_init__(self):
        if not (self.profile in ("simulate", "uniform") or self.profile.startswith("file:")):
            raise ConfigError(f"profile source must be simulate, uniform or file:<path>, got {self.profile!r}")
        if self.profile.startswith("file:") and not self.profile[5:]:
            raise ConfigError("profile source file: needs a path")
        if self.strategy not in ("two-opt", "greedy"):
            raise ConfigError(f"strategy must be two-opt or greedy, got {self.strategy!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.max_steps < 1 or self.memory_size < 4096:
            raise ConfigError("max_steps must be positive and memory_size at least 4096")
        if self.format not in (None, "elf64", "flat", "listing"):
            raise ConfigError(f"unknown input format {self.format!r}")

    def echo(self) -> dict:
        c, o = self.constraints, self.oracle
        return {
            "input": {"path": self.input, "format": self.format, "base": f"0x{self.base:x}",
                      "entry": None if self.entry is None else f"0x{self.entry:x}"},
            "profile": {"source": self.profile, "max_steps": self.max_steps, "memory_size": self.memory_size},
            "constraints": {"io": [c.in_max, c.out_max], "u_max": c.u_max, "forbidden": sorted(c.forbidden),
                            "min_pattern_size": c.min_pattern_size, "max_components": c.max_components,
                            "max_candidates": c.max_candidates, "imm_slots": c.imm_slots,
                            "imm_width": c.imm_width},
            "oracle": {"mode": o.mode, "t_clk_base": str(o.t_clk_base), "baseline_area": str(o.baseline_area),
                       "decode_overhead": str(o.decode_overhead), "delay_unit_ns": str(o.delay_unit_ns),
                       "decoder_area_per_instruction": str(o.decoder_area_per_instruction),
                       "template_area": {k: str(v) for k, v in o.template_area},
                       "delay_overrides": {k: str(v) for k, v in o.delay_overrides},
                       "area_overrides": {k: str(v) for k, v in o.area_overrides},
                       "external_command": o.external_command, "external_workdir": o.external_workdir},
            "selection": {"strategy": self.strategy},
            "output": {"dir": self.output, "jobs": self.jobs, "seed": self.seed},
        }


def parse_io(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"I/O shape must look like '3,1', got {text!r}") from None
    return a, b


def _int(text, what) -> int:
    try:
        return int(str(text).strip(), 0)
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {text!r}") from None


def _frac(text, what) -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{what}: expected a number, got {text!r}") from None


def read_config_file(path) -> dict:
    """Flatten a config file into ``{"section.key": value}`` strings."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep keys such as delay.MUL verbatim
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {f"{s}.{k}": v for s in parser.sections() for k, v in parser.items(s)}


KNOWN_KEYS = {
    "input.path", "input.format", "input.base", "input.entry",
    "profile.source", "profile.max_steps", "profile.memory_size",
    "constraints.io", "constraints.u_max", "constraints.forbidden", "constraints.min_pattern_size",
    "constraints.max_components", "constraints.max_candidates",
    "oracle.mode", "oracle.t_clk_base", "oracle.baseline_area", "oracle.decode_overhead",
    "oracle.delay_unit_ns", "oracle.decoder_area_per_instruction", "oracle.command", "oracle.workdir",
    "selection.strategy", "output.dir", "output.jobs", "output.seed", "output.verbosity",
}
_PREFIXED = ("oracle.delay.", "oracle.area.", "oracle.template_area.")


def build_config(values: dict) -> RunConfig:
    """RunConfig from flattened ``section.key`` values (strings or native)."""
    for key in values:
        if key not in KNOWN_KEYS and not key.startswith(_PREFIXED):
            raise ConfigError(f"unknown config key {key!r}")
    v = values.get
    in_max, out_max = parse_io(v("constraints.io", "3,1"))
    forbidden = isa.DEFAULT_FORBIDDEN
    if v("constraints.forbidden") is not None:
        raw = v("constraints.forbidden")
        items = raw.replace(",", " ").split() if isinstance(raw, str) else list(raw)
        forbidden = frozenset(items) | isa.DEFAULT_FORBIDDEN if "+default" in items else frozenset(items)
        forbidden = frozenset(x for x in forbidden if x != "+default")
    constraints = ConstraintConfig(
        in_max=in_max, out_max=out_max,
        u_max=_int(v("constraints.u_max", 8), "u_max"),
        forbidden=forbidden,
        min_pattern_size=_int(v("constraints.min_pattern_size", 2), "min_pattern_size"),
        max_components=_int(v("constraints.max_components", 2), "max_components"),
        max_candidates=_int(v("constraints.max_candidates", 10_000_000), "max_candidates"),
    )
    delay = {k[len("oracle.delay."):]: _frac(x, k) for k, x in values.items() if k.startswith("oracle.delay.")}
    area = {k[len("oracle.area."):]: _frac(x, k) for k, x in values.items() if k.startswith("oracle.area.")}
    template_area = dict(DEFAULT_TEMPLATE_AREA)
    for k, x in values.items():
        if k.startswith("oracle.template_area."):
            name = k[len("oracle.template_area."):]
            if name not in DEFAULT_TEMPLATE_AREA:
                raise ConfigError(f"unknown template {name!r}")
            template_area[name] = _frac(x, k)
    defaults = OracleConfig()
    oracle = OracleConfig(
        mode=v("oracle.mode", "analytic"),
        t_clk_base=_frac(v("oracle.t_clk_base", defaults.t_clk_base), "t_clk_base"),
        baseline_area=_frac(v("oracle.baseline_area", defaults.baseline_area), "baseline_area"),
        decode_overhead=_frac(v("oracle.decode_overhead", defaults.decode_overhead), "decode_overhead"),
        delay_unit_ns=_frac(v("oracle.delay_unit_ns", defaults.delay_unit_ns), "delay_unit_ns"),
        decoder_area_per_instruction=_frac(v("oracle.decoder_area_per_instruction",
                                             defaults.decoder_area_per_instruction), "decoder_area_per_instruction"),
        template_area=template_area,
        delay_overrides=delay,
        area_overrides=area,
        external_command=v("oracle.command", "") or "",
        external_workdir=v("oracle.workdir") or None,
    )
    entry = v("input.entry")
    return RunConfig(
        input=v("input.path"),
        format=v("input.format") or None,
        base=_int(v("input.base", 0x8000_0000), "base"),
        entry=None if entry in (None, "") else _int(entry, "entry"),
        profile=v("profile.source", "simulate"),
        max_steps=_int(v("profile.max_steps", DEFAULT_MAX_STEPS), "max_steps"),
        memory_size=_int(v("profile.memory_size", DEFAULT_MEMORY), "memory_size"),
        constraints=constraints,
        oracle=oracle,
        strategy=v("selection.strategy", "two-opt"),
        output=v("output.dir", "cidre-out"),
        jobs=_int(v("output.jobs", 1), "jobs"),
        seed=_int(v("output.seed", 0), "seed"),
        verbosity=_int(v("output.verbosity", 0), "verbosity"),
    )


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """File values (``path`` or ``$CIDRE_CONFIG``) overlaid by ``overrides``."""
    values = {}
    path = path or os.environ.get(ENV_CONFIG)
    if path:
        values.update(read_config_file(path))
    values.update({k: x for k, x in (overrides or {}).items() if x is not None})
    return build_config(values)


def with_output(cfg: RunConfig, output: str) -> RunConfig:
    return replace(cfg, output=output)
