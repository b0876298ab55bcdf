"""Clock-period and area estimates for a candidate instruction set.

The analytic model is a placeholder for logic synthesis: a custom
instruction's critical path is the longest chain of normalized operation
delays in its pattern, and the core's clock period grows once
``decode_overhead + path`` exceeds the baseline period.  All numbers are
non-physical defaults; calibrated tables or an external command replace them.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from . import isa
from .canonizer import KIND_OP, IsoClass
from .encoding import fitting_templates
from .errors import ConfigError, OracleError

_EXTERNAL_LOCK = threading.Lock()

DEFAULT_TEMPLATE_AREA = {
    "R2_1_REG": Fraction(0),
    "R2_1_IMM12": Fraction(0),
    "R3_1_REG": Fraction(40),  # third register-file read port
    "R3_1_IMM6": Fraction(0),
    "R3_2_REG": Fraction(60),  # second write port plus third read port
}


def _frac(value) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(str(value))


@dataclass(frozen=True)
class OracleConfig:
    mode: str = "analytic"
    t_clk_base: Fraction = Fraction(1)
    baseline_area: Fraction = Fraction(1000)
    decode_overhead: Fraction = Fraction(1, 5)
    delay_unit_ns: Fraction = Fraction(1, 4)
    decoder_area_per_instruction: Fraction = Fraction(2)
    template_area: tuple = tuple(sorted(DEFAULT_TEMPLATE_AREA.items()))
    delay_overrides: tuple = ()  # (mnemonic, units)
    area_overrides: tuple = ()
    external_command: str = ""
    external_workdir: Optional[str] = None

    def __post_init__(self):
        for name in ("t_clk_base", "baseline_area", "decode_overhead", "delay_unit_ns",
                     "decoder_area_per_instruction"):
            object.__setattr__(self, name, _frac(getattr(self, name)))
        for name in ("template_area", "delay_overrides", "area_overrides"):
            value = getattr(self, name)
            items = value.items() if isinstance(value, dict) else value
            object.__setattr__(self, name, tuple(sorted((k, _frac(v)) for k, v in items)))
        if self.mode not in ("analytic", "external"):
            raise ConfigError(f"oracle mode must be 'analytic' or 'external', got {self.mode!r}")
        if self.t_clk_base <= 0:
            raise ConfigError("t_clk_base must be positive")
        if self.delay_unit_ns <= 0:
            raise ConfigError("delay_unit_ns must be positive")
        if self.decode_overhead < 0 or self.baseline_area < 0:
            raise ConfigError("decode_overhead and baseline_area must be non-negative")
        unknown = {k for k, _ in self.delay_overrides + self.area_overrides} - set(isa.CATALOG)
        if unknown:
            raise ConfigError(f"unknown mnemonics in oracle overrides: {sorted(unknown)}")
        if self.mode == "external" and not self.external_command:
            raise ConfigError("external oracle mode needs a command")

    def delay(self, mnemonic: str) -> Fraction:
        return dict(self.delay_overrides).get(mnemonic, isa.CATALOG[mnemonic].hw_delay_units)

    def area(self, mnemonic: str) -> Fraction:
        return dict(self.area_overrides).get(mnemonic, isa.CATALOG[mnemonic].area_units)


@dataclass(frozen=True)
class CostEstimate:
    t_clk: Fraction
    area: Fraction
    met_baseline_timing: bool
    details: dict = field(default_factory=dict, compare=False)


def class_mnemonics(cls: IsoClass) -> list[str]:
    return [isa.MNEMONICS[lab[1]] for lab in cls.cf.labels if lab[0] == KIND_OP]


def critical_path(cls: IsoClass, cfg: OracleConfig) -> Fraction:
    """Longest sum of operation delays along any path of the pattern."""
    labels = cls.cf.labels
    ops = {i for i, lab in enumerate(labels) if lab[0] == KIND_OP}
    preds = {i: [] for i in ops}
    for s, d, _slot in cls.cf.edges:
        if s in ops:
            preds[d].append(s)
    memo: dict[int, Fraction] = {}

    def arrival(v):
        if v not in memo:
            own = cfg.delay(isa.MNEMONICS[labels[v][1]])
            memo[v] = own + max((arrival(p) for p in preds[v]), default=Fraction(0))
        return memo[v]

    return max((arrival(v) for v in ops), default=Fraction(0))


def _template_of(cls: IsoClass) -> str:
    reg_in, imm, out = cls.cf.shape
    width = max((isa.signed_width(p.kept_imm) for _b, p in cls.occurrences if p.kept_imm is not None), default=0)
    fitting = fitting_templates(reg_in, imm, out, width)
    return fitting[0].id if fitting else ""


def analytic_estimate(classes: Iterable[IsoClass], cfg: OracleConfig) -> CostEstimate:
    classes = list(classes)
    if not classes:
        return CostEstimate(cfg.t_clk_base, cfg.baseline_area, True)
    path = max(critical_path(c, cfg) for c in classes)
    t_clk = max(cfg.t_clk_base, (cfg.decode_overhead + path) * cfg.delay_unit_ns)
    area = cfg.baseline_area
    template_area = dict(cfg.template_area)
    templates = set()
    for c in classes:
        area += sum(cfg.area(mn) for mn in class_mnemonics(c))
        area += cfg.decoder_area_per_instruction
        templates.add(_template_of(c))
    area += sum(template_area.get(t, Fraction(0)) for t in templates)
    return CostEstimate(t_clk, area, t_clk == cfg.t_clk_base,
                        {"critical_path_units": path, "templates": sorted(templates)})


def parse_result(text: str) -> tuple[Fraction, Fraction]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in ("clock_period_ns", "area_units"):
            raise OracleError(f"malformed oracle result line {lineno}: {line!r}")
        try:
            values[key] = Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise OracleError(f"malformed oracle result line {lineno}: bad number {value.strip()!r}") from None
    missing = {"clock_period_ns", "area_units"} - set(values)
    if missing:
        raise OracleError(f"oracle result misses {sorted(missing)}")
    return values["clock_period_ns"], values["area_units"]


def external_estimate(classes: Iterable[IsoClass], cfg: OracleConfig) -> CostEstimate:
    from .emitter import write_model

    classes = list(classes)
    if not classes:
        return CostEstimate(cfg.t_clk_base, cfg.baseline_area, True)
    with _EXTERNAL_LOCK, tempfile.TemporaryDirectory(dir=cfg.external_workdir) as tmp:
        model_dir = Path(tmp) / "model"
        result = Path(tmp) / "result.txt"
        write_model(classes, model_dir)
        cmd = shlex.split(cfg.external_command) + [str(model_dir), str(result)]
        try:
            proc = subprocess.run(cmd, cwd=cfg.external_workdir, capture_output=True, text=True)
        except OSError as exc:
            raise OracleError(f"cannot run oracle command: {exc}") from None
        if proc.returncode != 0:
            raise OracleError(f"oracle command exited with {proc.returncode}: {proc.stderr.strip()}")
        if not result.is_file():
            raise OracleError("oracle command wrote no result file")
        t_clk, area = parse_result(result.read_text(encoding="utf-8"))
    # The baseline period is a floor in either mode.
    t_clk = max(t_clk, cfg.t_clk_base)
    return CostEstimate(t_clk, area, t_clk == cfg.t_clk_base)


def estimate(classes: Iterable[IsoClass], cfg: OracleConfig) -> CostEstimate:
    if cfg.mode == "external":
        return external_estimate(classes, cfg)
    return analytic_estimate(classes, cfg)
