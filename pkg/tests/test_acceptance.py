"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""
import math
import os
import random
import subprocess
import sys
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from rezone.calibration import calibrate
from rezone.cli import UNIFORM_WEIGHT
from rezone.constraints import check_feasible
from rezone.evaluation import district_dissimilarity, evaluate
from rezone.fixtures import P2, B, tiny1, two_level
from rezone.instance import Zoning, write_instance
from rezone.objectives import (BALANCE, COMPACT, DEFAULT_OBJECTIVES, DISTANCE, FEEDER,
                               ObjectiveConfig, objective_terms, school_counts, total_objective)
from rezone.solver import SolverParams, enumerate_optimal, solve
from rezone.synth import SynthParams, generate
from rezone.weights import SURVEY_OBJECTIVES, SurveyResponse, derive_weights

pytestmark = pytest.mark.slow

SINGLE = {"S-TR": DISTANCE, "S-DB": BALANCE, "S-C": COMPACT, "S-FP": FEEDER}
OWN_METRIC = {"S-TR": "avg_driving_miles", "S-DB": "district_dissimilarity",
              "S-C": "boundary_edges", "S-FP": "feeder_count"}


def report(n: int, ok: bool, detail: str):
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")


def uniform_weights(instance):
    return {(s, o): UNIFORM_WEIGHT for s in instance.schools for o in SURVEY_OBJECTIVES}


def survey_weights(instance, seed=0):
    """Weights from a random survey of 40 respondents per school."""
    rng = random.Random(seed)
    races = ("White", "Black", "Hispanic")
    demo = {}
    for s in instance.schools:
        cut = sorted(rng.random() for _ in range(2))
        demo[s] = {r: Fraction(v).limit_denominator(1000)
                   for r, v in zip(races, (cut[0], cut[1] - cut[0]))}
        demo[s][races[2]] = 1 - demo[s][races[0]] - demo[s][races[1]]
    schools = sorted(instance.schools)
    responses = []
    for i in range(40 * len(schools)):
        ranks = dict(zip(SURVEY_OBJECTIVES, rng.sample([1, 2, 3], 3)))
        aff = tuple(sorted(rng.sample(schools, rng.randint(1, min(4, len(schools))))))
        race = rng.choice(races + ("unspecified",))
        responses.append(SurveyResponse(str(i), race, aff, ranks))
    return derive_weights(responses, demo, schools).weights


def preset_config(name, instance, params, weights=None):
    """Objective setup of a named preset (calibration from single-objective
    runs for the multi-objective ones)."""
    c = instance.config
    if name in SINGLE:
        return ObjectiveConfig(frozenset({SINGLE[name]}),
                               constraints=replace(c, enforce_dissimilarity_bound=name == "S-DB"))
    c = replace(c, enforce_dissimilarity_bound=True)
    objs = frozenset(DEFAULT_OBJECTIVES)
    cal = calibrate(instance, objs, params, c).b
    w = uniform_weights(instance) if name == "M-NW" else (weights or survey_weights(instance))
    return ObjectiveConfig(objs, cal, w, c)


# 1 -------------------------------------------------------------------------------

def small_instance(k: int):
    rng = random.Random(1000 + k)
    if k % 2:
        rows, cols, levels = 2, 3, (1, 2)
        schools = (rng.choice((2, 3)), 2)
    else:
        rows, cols = rng.choice(((3, 4), (3, 3), (2, 4)))
        levels, schools = (1,), (rng.choice((2, 3)),)
    p = SynthParams(rows=rows, cols=cols, levels=levels, schools_per_level=schools,
                    students_per_unit=(3, 12), clustering=rng.random(),
                    sq_irregularity=rng.choice((0.0, 1.0, 2.0)), seed=k)
    return generate(p)


def test_criterion_1_oracle_equivalence():
    names = ["S-TR", "S-DB", "S-C", "S-FP", "M-NW"]
    matches, slow, rows = 0, [], []
    for k in range(50):
        inst = small_instance(k)
        name = names[k % len(names)]
        if name == "S-FP" and len(inst.levels) == 1:
            name = "S-C"
        params = SolverParams(seed=k, time_limit=60, max_iterations=20000)
        cfg = preset_config(name, inst, params)
        t = time.perf_counter()
        got = solve(inst, cfg, params)
        secs = time.perf_counter() - t
        want = enumerate_optimal(inst, cfg)
        ok = abs(got.objective - want.objective) <= 1e-9
        matches += ok
        if secs >= 60:
            slow.append(k)
        rows.append((k, name, got.objective, want.objective, ok))
    share = matches / 50
    ok = share >= 0.95 and not slow
    report(1, ok, f"{matches}/50 instances match the oracle within 1e-9 ({share:.0%}); "
                  f"{len(slow)} over 60 s")
    assert ok, [r for r in rows if not r[-1]]


# 2 -------------------------------------------------------------------------------

def test_criterion_2_tiny_ground_truths():
    inst = tiny1()
    p = SolverParams(seed=0, max_iterations=5000)
    checks = []
    dist = ObjectiveConfig(frozenset({DISTANCE}))
    o, s = enumerate_optimal(inst, dist), solve(inst, dist, p)
    checks.append(("distance", o.objective == 2.0 and o.best_zoning == inst.sq_zoning
                   and abs(s.objective - 2.0) <= 1e-9))
    bal = ObjectiveConfig(frozenset({BALANCE}),
                          constraints=replace(inst.config, enforce_dissimilarity_bound=True))
    o, s = enumerate_optimal(inst, bal), solve(inst, bal, p)
    p2b = inst.sq_zoning.moved({P2: B})
    checks.append(("balance", abs(o.objective - 0.3) <= 1e-9 and o.best_zoning == p2b
                   and abs(s.objective - 0.3) <= 1e-9 and s.best_zoning == p2b))
    comp = ObjectiveConfig(frozenset({COMPACT}))
    o, s = enumerate_optimal(inst, comp), solve(inst, comp, p)
    checks.append(("compact", o.objective == 1 and s.objective == 1))
    ok = all(c for _, c in checks)
    report(2, ok, ", ".join(f"{n} {'ok' if c else 'wrong'}" for n, c in checks))
    assert ok


# 3 and 4 -------------------------------------------------------------------------

PRESETS = ["S-TR", "S-DB", "S-C", "S-FP", "M-NW", "M-SW"]


@pytest.fixture(scope="module")
def preset_matrix():
    """(instance name, preset, seed, SQ objective, result, config) over three
    districts, every preset and five seeds."""
    districts = {
        "tiny": tiny1(),
        "two-level": two_level(),
        "synthetic": generate(SynthParams(rows=6, cols=6, levels=(1, 2),
                                          schools_per_level=(3, 2), clustering=0.5,
                                          sq_irregularity=2.0, seed=3)),
    }
    out = []
    for dname, inst in districts.items():
        for name in PRESETS:
            if name == "S-FP" and len(inst.levels) == 1:
                continue
            params = SolverParams(seed=0, max_iterations=8000)
            cfg = preset_config(name, inst, params)
            sq_obj = total_objective(inst.sq_zoning, inst, cfg).total
            for seed in range(5):
                res = solve(inst, cfg, replace(params, seed=seed))
                out.append((dname, name, seed, sq_obj, res, cfg, inst))
    return out


def test_criterion_3_warm_start_dominance(preset_matrix):
    worse = []
    for dname, name, seed, sq_obj, res, cfg, inst in preset_matrix:
        final = total_objective(res.best_zoning, inst, cfg).total
        if not final <= sq_obj:
            worse.append((dname, name, seed, final, sq_obj))
    ok = not worse
    report(3, ok, f"{len(preset_matrix) - len(worse)}/{len(preset_matrix)} runs end at or "
                  f"below the status-quo objective")
    assert ok, worse


def test_criterion_4_feasibility(preset_matrix):
    bad = []
    for dname, name, seed, _, res, cfg, inst in preset_matrix:
        rep = check_feasible(res.best_zoning, inst, cfg)
        if not rep.ok:
            bad.append((dname, name, seed, rep.to_text()))
    ok = not bad
    report(4, ok, f"{len(bad)} infeasible zonings among {len(preset_matrix)} runs")
    assert ok, bad


# 5 -------------------------------------------------------------------------------

def test_criterion_5_feeder_tractability():
    inst = generate(SynthParams(rows=10, cols=5, levels=(1, 2), schools_per_level=(4, 2),
                                clustering=0.5, sq_irregularity=2.0, seed=5))
    assert len(inst.units) == 100
    cfg = ObjectiveConfig(frozenset({FEEDER}))
    counts, times = [], []
    for seed in range(10):
        res = solve(inst, cfg, SolverParams(seed=seed, time_limit=60, max_iterations=60000))
        times.append(res.wall_time)
        counts.append(evaluate(res.best_zoning, inst, cfg)[1].feeder_count)
    se = float(np.std(counts, ddof=1) / math.sqrt(len(counts)))
    sq = evaluate(inst.sq_zoning, inst, cfg)[1].feeder_count
    # every lower-level school feeds at least one school: a lower bound on the count
    lower = len(inst.schools_by_level[1])
    ok = se == 0 and max(times) < 60 and counts[0] <= sq
    report(5, ok, f"feeder patterns {counts[0]} on all seeds (SQ {sq}, lower bound {lower}); "
                  f"se {se}; slowest run {max(times):.1f} s")
    assert ok, counts


# 6 -------------------------------------------------------------------------------

def test_criterion_6_calibration_identity():
    checked, worst = 0, 0.0
    for inst in (tiny1(), two_level(),
                 generate(SynthParams(rows=6, cols=6, levels=(1, 2), schools_per_level=(3, 2),
                                      clustering=0.5, sq_irregularity=2.0, seed=2))):
        c = replace(inst.config, enforce_dissimilarity_bound=True)
        res = calibrate(inst, DEFAULT_OBJECTIVES, SolverParams(seed=0, max_iterations=5000), c)
        for (l, o), b in res.b.items():
            if (l, o) in res.fallback:
                continue
            # independent recomputation of N and |delta| from the calibration run
            run = res.source_runs[o]
            cfg = ObjectiveConfig(frozenset({o}))
            before = objective_terms(inst.sq_zoning, inst, l, o, cfg)
            after = objective_terms(run.best_zoning, inst, l, o, cfg)
            n = len(before)
            delta = sum(abs(after[k] - before[k]) for k in before) / n
            worst = max(worst, abs(b * n * delta - 1.0))
            checked += 1
    ok = checked > 0 and worst <= 1e-12
    report(6, ok, f"{checked} calibrated (level, objective) pairs, max |b N delta - 1| = {worst:.2e}")
    assert ok


# 7 -------------------------------------------------------------------------------

def test_criterion_7_weight_properties():
    demo = {1: {"White": Fraction(1, 2), "Black": Fraction(1, 2)}}
    ranks = {"distance": {"distance": 1, "balance": 2, "feeder": 3},
             "balance": {"distance": 2, "balance": 1, "feeder": 3},
             "feeder": {"distance": 3, "balance": 2, "feeder": 1}}
    rs = [SurveyResponse("1", "White", (1,), ranks["distance"]),
          SurveyResponse("2", "White", (1,), ranks["distance"]),
          SurveyResponse("3", "White", (1,), ranks["balance"]),
          SurveyResponse("4", "Black", (1,), ranks["feeder"])]
    got = derive_weights(rs, demo).exact
    example = tuple(got[(1, o)] for o in SURVEY_OBJECTIVES)
    example_ok = example == (Fraction(1, 3), Fraction(1, 6), Fraction(1, 2))
    worst = 0.0
    for seed in range(20):
        inst = generate(SynthParams(rows=4, cols=4, schools_per_level=(5,), seed=seed))
        w = survey_weights(inst, seed)
        for s in inst.schools:
            worst = max(worst, abs(sum(w[(s, o)] for o in SURVEY_OBJECTIVES) - 1.0))
    ok = example_ok and worst <= 1e-9
    report(7, ok, f"worked example {tuple(str(x) for x in example)}; "
                  f"max |sum of weights - 1| = {worst:.1e} over 100 schools")
    assert ok


# 8 -------------------------------------------------------------------------------

def test_criterion_8_dissimilarity_bounds():
    inst = generate(SynthParams(levels=(1,), schools_per_level=(4,), clustering=0.6, seed=8))
    rng = random.Random(8)
    schools = sorted(inst.schools)
    lo, hi = math.inf, -math.inf
    for _ in range(1000):
        z = Zoning({u: rng.choice(schools) for u in inst.units})
        o, og = school_counts(z, inst, 1)
        d = district_dissimilarity(o, og)
        if not math.isnan(d):
            lo, hi = min(lo, d), max(hi, d)
    in_range = 0.0 <= lo and hi <= 1.0
    mixed = []
    for s in range(20):
        flat = generate(SynthParams(clustering=0.0, seed=s))
        mixed.append(evaluate(flat.sq_zoning, flat)[1].district_dissimilarity)
    split_inst = generate(SynthParams(schools_per_level=(2,), clustering=1.0, seed=0))
    split = evaluate(split_inst.sq_zoning, split_inst)[1].district_dissimilarity
    ok = in_range and max(mixed) < 0.15 and split > 0.8
    report(8, ok, f"random zonings in [{lo:.3f}, {hi:.3f}]; no clustering max {max(mixed):.3f} "
                  f"over 20 seeds; split halves {split:.3f}")
    assert ok


# 9 -------------------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    data = tmp_path / "data"
    write_instance(generate(SynthParams(rows=5, cols=5, levels=(1, 2),
                                        schools_per_level=(3, 2), clustering=0.5,
                                        sq_irregularity=2.0, seed=9)), data)
    cfg = tmp_path / "run.yaml"
    cfg.write_text("solver:\n  seeds: 3\n  max_iterations: 3000\n"
                   "experiments:\n  - preset: SQ\n  - preset: S-DB\n  - preset: S-FP\n"
                   "  - preset: M-NW\n")
    outs = []
    for label, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        env = dict(os.environ, REZONE_THREADS=threads)
        proc = subprocess.run([sys.executable, "-m", "rezone", "run", str(cfg), "--data",
                               str(data), "--out", str(tmp_path / label), "--quiet"],
                              env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(tmp_path / label)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                   if p.name in ("zoning.csv", "metrics.json"))
    differ = [str(f) for f in files for o in outs[1:]
              if (outs[0] / f).read_bytes() != (o / f).read_bytes()]
    ok = len(files) > 0 and not differ
    report(9, ok, f"{len(files)} zoning.csv/metrics.json files byte-identical across two runs "
                  f"and thread counts 1 and 3" if ok else f"differing: {differ}")
    assert ok


# 10 ------------------------------------------------------------------------------

TRADEOFF_DISTRICT = SynthParams(rows=10, cols=10, levels=(1, 2), schools_per_level=(4, 2),
                                clustering=0.5, sq_irregularity=3.0, seed=1)


def test_criterion_10_tradeoff_direction():
    inst = generate(TRADEOFF_DISTRICT)
    params = SolverParams(seed=0, time_limit=60, max_iterations=50000)
    names = list(SINGLE) + ["M-NW", "M-SW"]
    reports = {}
    for name in names:
        cfg = preset_config(name, inst, params)
        reports[name] = [evaluate(solve(inst, cfg, replace(params, seed=s)).best_zoning, inst)
                         for s in range(10)]
    sq = evaluate(inst.sq_zoning, inst)
    problems, checks = [], 0
    for l in inst.levels:
        for single, metric in OWN_METRIC.items():
            if metric == "feeder_count" and inst.levels.next_level(l) is None:
                continue
            mean = {n: float(np.mean([getattr(r[l], metric) for r in reports[n]])) for n in names}
            checks += 1
            best = min(mean.values())
            if mean[single] > best + 1e-9:
                problems.append(f"level {l} {metric}: {single} {mean[single]:.4g} "
                                f"> best {best:.4g}")
            ends = sorted((getattr(sq[l], metric), mean[single]))
            for multi in ("M-NW", "M-SW"):
                checks += 1
                if not ends[0] - 1e-9 <= mean[multi] <= ends[1] + 1e-9:
                    problems.append(f"level {l} {metric}: {multi} {mean[multi]:.4g} "
                                    f"outside [{ends[0]:.4g}, {ends[1]:.4g}]")
    ok = not problems
    report(10, ok, f"{checks - len(problems)}/{checks} trade-off checks hold over 10 seeds"
                   + ("" if ok else "; " + "; ".join(problems)))
    assert ok, problems
