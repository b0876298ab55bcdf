import random
import sys
from fractions import Fraction

import pytest

from cidre.canonizer import group
from cidre.cost_oracle import OracleConfig, critical_path, estimate, parse_result
from cidre.enumerator import ConstraintConfig, enumerate_patterns, make_pattern
from cidre.errors import ConfigError, OracleError
from helpers import block_of, random_dfg


def _class(text, mask, cfg=ConstraintConfig(3, 1, min_pattern_size=1)):
    _, dfg = block_of(text)
    return group([make_pattern(dfg, mask, cfg)], {0: dfg})[0]


def test_empty_set_is_baseline():
    cfg = OracleConfig()
    e = estimate([], cfg)
    assert (e.t_clk, e.area, e.met_baseline_timing) == (cfg.t_clk_base, cfg.baseline_area, True)


def test_single_xor_meets_baseline():
    cfg = OracleConfig(t_clk_base=Fraction("0.82"), decode_overhead=Fraction("0.2"),
                       delay_unit_ns=Fraction("0.8"), delay_overrides={"xor": Fraction("0.4")})
    cls = _class("xor x5, x6, x7\n", 0b1)
    assert critical_path(cls, cfg) == Fraction("0.4")
    e = estimate([cls], cfg)
    assert e.t_clk == Fraction("0.82") and e.met_baseline_timing
    # The unclamped period would be 0.48 ns.
    assert (cfg.decode_overhead + Fraction("0.4")) * cfg.delay_unit_ns == Fraction("0.48")


def test_mul_chain_misses_baseline():
    cfg = OracleConfig()
    cls = _class("mul x5, x6, x7\nmul x5, x5, x5\nmul x5, x5, x6\n", 0b111)
    assert critical_path(cls, cfg) == Fraction("10.5")
    e = estimate([cls], cfg)
    assert e.t_clk == (Fraction("0.2") + Fraction("10.5")) / 4 and e.t_clk > cfg.t_clk_base
    assert not e.met_baseline_timing


def test_default_delays():
    cfg = OracleConfig()
    assert [cfg.delay(m) for m in ("add", "sub", "and", "or", "xor", "sll", "mul", "mulw", "slt")] == \
        [1, 1, Fraction("0.35"), Fraction("0.35"), Fraction("0.35"), Fraction("0.9"), Fraction("3.5"),
         Fraction("3.5"), Fraction("1.1")]


def test_area_counts_ops_decoder_and_ports():
    cfg = OracleConfig()
    cls = _class("add x5, x6, x7\nadd x5, x5, x8\n", 0b11)  # three inputs: the R4 form
    e = estimate([cls], cfg)
    assert e.area == cfg.baseline_area + 2 * cfg.area("add") + cfg.decoder_area_per_instruction + 40


def test_monotonicity():
    rng = random.Random(31)
    cfg = OracleConfig()
    for _ in range(20):
        dfgs = {b: random_dfg(rng, 9, b) for b in range(3)}
        classes = group([p for d in dfgs.values() for p in enumerate_patterns(d, ConstraintConfig(3, 2))], dfgs)
        rng.shuffle(classes)
        prev = estimate([], cfg)
        for k in range(1, min(len(classes), 8) + 1):
            cur = estimate(classes[:k], cfg)
            assert cur.t_clk >= prev.t_clk and cur.area >= prev.area
            prev = cur


def test_config_validation():
    with pytest.raises(ConfigError):
        OracleConfig(t_clk_base=0)
    with pytest.raises(ConfigError):
        OracleConfig(delay_unit_ns=-1)
    with pytest.raises(ConfigError):
        OracleConfig(delay_overrides={"fmul": 1})
    with pytest.raises(ConfigError):
        OracleConfig(mode="external")


STUB = """
import pathlib, sys
model, result = map(pathlib.Path, sys.argv[1:3])
assert (model / "index").is_file()
n = len(list(model.glob("cid_*.insn")))
result.write_text("clock_period_ns=1.0625\\n# comment\\narea_units=%d.5\\n" % (1000 + n))
"""


def _stub(tmp_path, body):
    script = tmp_path / "stub.py"
    script.write_text(body)
    return f"{sys.executable} {script}"


def test_external_round_trip(tmp_path):
    cfg = OracleConfig(mode="external", external_command=_stub(tmp_path, STUB))
    cls = _class("xor x5, x6, x7\nadd x5, x5, x6\n", 0b11)
    e = estimate([cls], cfg)
    assert e.t_clk == Fraction("1.0625") and e.area == Fraction("1001.5") and not e.met_baseline_timing


def test_external_failure(tmp_path):
    cfg = OracleConfig(mode="external", external_command=_stub(tmp_path, "import sys; sys.exit(3)"))
    with pytest.raises(OracleError, match="exited with 3"):
        estimate([_class("xor x5, x6, x7\n", 1)], cfg)


def test_external_malformed(tmp_path):
    body = "import sys, pathlib; pathlib.Path(sys.argv[2]).write_text('clock_period_ns=fast\\n')"
    cfg = OracleConfig(mode="external", external_command=_stub(tmp_path, body))
    with pytest.raises(OracleError, match="malformed"):
        estimate([_class("xor x5, x6, x7\n", 1)], cfg)


def test_parse_result_errors():
    assert parse_result("clock_period_ns = 2\narea_units=3\n") == (2, 3)
    with pytest.raises(OracleError, match="misses"):
        parse_result("clock_period_ns=2\n")
    with pytest.raises(OracleError, match="line 1"):
        parse_result("power=1\n")
