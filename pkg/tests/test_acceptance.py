"""Acceptance suite: one test per criterion, summarized by conftest."""

import json
import random
import time
from pathlib import Path

import pytest

import cidre
from cidre.asm import assemble, to_listing
from cidre.canonizer import canonical_form, group, iso_check
from cidre.cli import main
from cidre.cost_oracle import OracleConfig
from cidre.enumerator import ConstraintConfig, brute_force_patterns, enumerate_patterns, make_pattern
from cidre.pipeline import enumerate_and_canonize, verify
from cidre.selector import check_result, exhaustive_optimum, execution_time_speedup, select
from helpers import FIVE_VERTEX, block_of, random_dfg, random_instructions
from test_canonizer import _dfg, _one_edit, _remap, _rename, _reschedule, _swap_commutative
from test_selector import TABLE, _flat, _random_instance

TOY = Path(cidre.__file__).parent / "data" / "toy.elf"
README = Path(__file__).resolve().parents[1] / "README.md"


@pytest.mark.criterion(1, "five-vertex fixture yields exactly three patterns")
def test_five_vertex_enumeration(tmp_path, capsys):
    start = time.perf_counter()
    listing = tmp_path / "five.lst"
    listing.write_text(to_listing(assemble(FIVE_VERTEX, 0x8000_0000)))
    code = main(["enumerate", "--input", str(listing), "--format", "listing", "--io", "3,1"])
    out = capsys.readouterr().out
    assert code == 0 and "total: 3 patterns" in out
    _, dfg = block_of(FIVE_VERTEX)
    masks = sorted(p.mask for p in enumerate_patterns(dfg, ConstraintConfig(3, 1, forbidden={"lw"})))
    assert masks == [0b00110, 0b01100, 0b11000]
    assert time.perf_counter() - start < 1


@pytest.mark.criterion(2, "look-ahead covering reaches the optimum on the five-vertex fixture")
def test_five_vertex_covering():
    start = time.perf_counter()
    _, dfg = block_of(FIVE_VERTEX)
    cfg = ConstraintConfig(3, 1, forbidden={"lw"})
    classes = group(enumerate_patterns(dfg, cfg), {0: dfg})
    r = select(classes, {0: 1}, 5, {0: dfg}, cfg, OracleConfig(), "two-opt", _flat)
    assert r.total_merit == exhaustive_optimum(classes, {0: 1}, {0: dfg}, cfg.u_max) == 2
    chosen = sorted(p.mask for _bb, p in r.covers())
    assert chosen == [0b00110, 0b11000] and 0b01100 not in chosen
    assert time.perf_counter() - start < 1


@pytest.mark.criterion(3, "enumerator matches brute force on 200 random DAGs")
def test_enumerator_oracle():
    start = time.perf_counter()
    rng = random.Random(3)
    for _ in range(200):
        dfg = random_dfg(rng, rng.randrange(1, 13))
        cfg = ConstraintConfig(*rng.choice([(2, 1), (3, 1), (3, 2)]), min_pattern_size=rng.choice([1, 2]))
        found = [p.mask for p in enumerate_patterns(dfg, cfg)]
        assert len(found) == len(set(found))
        assert set(found) == set(brute_force_patterns(dfg, cfg))
    assert time.perf_counter() - start < 60


@pytest.mark.criterion(4, "canonical forms agree with the backtracking matcher and with parallel runs")
def test_canonizer_agreement():
    start = time.perf_counter()
    rng = random.Random(4)
    pairs = equal = 0
    while pairs < 600:
        cfg = ConstraintConfig(*rng.choice([(2, 1), (3, 1), (3, 2)]), min_pattern_size=1)
        instrs = random_instructions(rng, rng.randrange(2, 10), p_load=0, p_store=0)
        d1 = _dfg(instrs)
        pats = enumerate_patterns(d1, cfg)
        if not pats:
            continue
        moved, where = _reschedule(rng, _swap_commutative(rng, _rename(rng, instrs)))
        copy = _dfg(moved, 1)
        near = _dfg(_one_edit(rng, instrs), 2)
        for p in rng.sample(pats, min(3, len(pats))):
            for d2, q in ((copy, make_pattern(copy, _remap(p.mask, where), cfg)),
                          (near, make_pattern(near, p.mask, cfg))):
                same = canonical_form(d1, p) == canonical_form(d2, q)
                assert same == iso_check(d1, p, d2, q)
                pairs += 1
                equal += same
    assert 0 < equal < pairs
    dfgs = {b: random_dfg(rng, rng.randrange(3, 12), b) for b in range(16)}
    one = enumerate_and_canonize(dfgs, ConstraintConfig(3, 2), 1)
    eight = enumerate_and_canonize(dfgs, ConstraintConfig(3, 2), 8)
    assert [[cf.data for cf, _p in f] for f in one] == [[cf.data for cf, _p in f] for f in eight]
    assert time.perf_counter() - start < 30


@pytest.mark.criterion(5, "look-ahead selection is never worse than greedy on 50 random instances")
def test_selection_quality():
    start = time.perf_counter()
    rng = random.Random(5)
    ratios = []
    while len(ratios) < 50:
        cfg = ConstraintConfig(*rng.choice([(2, 1), (3, 1), (3, 2)]), u_max=rng.randrange(1, 5))
        classes, freq, dfgs = _random_instance(rng, cfg)
        if not classes:
            continue
        f_total = sum(len(d.vertices) * freq[b] for b, d in dfgs.items())
        two = select(classes, freq, f_total, dfgs, cfg, OracleConfig(), "two-opt", _flat)
        greedy = select(classes, freq, f_total, dfgs, cfg, OracleConfig(), "greedy", _flat)
        check_result(two, dfgs)
        check_result(greedy, dfgs)
        opt = exhaustive_optimum(classes, freq, dfgs, cfg.u_max)
        assert greedy.total_merit <= two.total_merit <= opt
        ratios.append(two.total_merit / opt if opt else 1.0)
    print(f"mean optimality ratio {sum(ratios) / len(ratios):.4f} (min {min(ratios):.4f})")
    assert time.perf_counter() - start < 60


@pytest.mark.criterion(6, "execution-time speedups follow from cycle speedups and clock increases")
def test_published_relation():
    for bench, shape, cyc, clk, exe in TABLE:
        assert abs(float(execution_time_speedup(cyc, clk / 100)) - exe) <= 0.01, (bench, shape)
    assert len(TABLE) == 24


@pytest.mark.criterion(7, "fused replay of the toy program equals f_total minus total merit")
@pytest.mark.parametrize("io", ["2,1", "3,1", "3,2"])
def test_accounting_identity(tmp_path, capsys, io):
    start = time.perf_counter()
    out = tmp_path / io.replace(",", "_")
    assert main(["run", "--input", str(TOY), "--io", io, "--out", str(out)]) == 0
    capsys.readouterr()
    v = verify(out / "report.json")
    report = json.loads((out / "report.json").read_text())
    merit = sum(s["merit"] for s in report["selection"]["selected"])
    assert merit > 0
    assert v.exact and v.state_matches and v.report_matches
    assert v.cycles == v.f_total - merit == v.expected
    assert time.perf_counter() - start < 10


@pytest.mark.criterion(8, "no nonempty selection is slower than the baseline")
def test_regression_safety(tmp_path, capsys):
    rng = random.Random(8)
    for _ in range(60):
        cfg = ConstraintConfig(*rng.choice([(2, 1), (3, 1), (3, 2)]), u_max=rng.randrange(1, 9))
        classes, freq, dfgs = _random_instance(rng, cfg)
        f_total = sum(len(d.vertices) * freq[b] for b, d in dfgs.items())
        oracle = OracleConfig(t_clk_base=rng.choice(["0.5", "1", "2"]))
        r = select(classes, freq, f_total, dfgs, cfg, oracle)
        if r.selected:
            assert r.t_ex_custom <= r.t_ex_base


@pytest.mark.criterion(9, "absolute published results are stated as not reproduced")
def test_non_reproducibility_statement():
    text = README.read_text(encoding="utf-8")
    assert "## What is not reproduced" in text
