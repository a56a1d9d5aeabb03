"""Every preset on a synthetic two-level district, compared against the status quo.

    python3 demos/synthetic_tradeoffs.py [iterations]

Single-objective presets push their own metric hardest; the weighted preset
trades them off.  Travel is optimized as a per-school ratio to status-quo
travel, so the preset that minimizes it need not have the lowest average
miles.
"""
import logging
import sys
from dataclasses import replace

from rezone.calibration import calibrate
from rezone.cli import UNIFORM_WEIGHT
from rezone.evaluation import compare_runs, comparison_to_text
from rezone.objectives import (BALANCE, COMPACT, DEFAULT_OBJECTIVES, DISTANCE, FEEDER,
                               ObjectiveConfig)
from rezone.solver import SolverParams, batch_solve
from rezone.synth import SynthParams, generate
from rezone.weights import SURVEY_OBJECTIVES

logging.basicConfig(level=logging.WARNING, format="%(message)s")
iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
inst = generate(SynthParams(rows=10, cols=10, levels=(1, 2), schools_per_level=(4, 2),
                            clustering=0.5, sq_irregularity=3.0, seed=1))
params = SolverParams(seed=0, max_iterations=iterations)

configs = {"SQ": ObjectiveConfig()}
for name, obj in (("S-TR", DISTANCE), ("S-DB", BALANCE), ("S-C", COMPACT), ("S-FP", FEEDER)):
    c = replace(inst.config, enforce_dissimilarity_bound=obj == BALANCE)
    configs[name] = ObjectiveConfig(frozenset({obj}), constraints=c)
bounded = replace(inst.config, enforce_dissimilarity_bound=True)
cal = calibrate(inst, DEFAULT_OBJECTIVES, params, bounded)
print("calibration (level, objective, terms, mean |change|, scaling):")
for row in cal.rows():
    print("  ", row)
uniform = {(s, o): UNIFORM_WEIGHT for s in inst.schools for o in SURVEY_OBJECTIVES}
configs["M-NW"] = ObjectiveConfig(frozenset(DEFAULT_OBJECTIVES), cal.b, uniform, bounded)

runs = {"SQ": [inst.sq_zoning]}
for name, cfg in configs.items():
    if name != "SQ":
        runs[name] = batch_solve(inst, cfg, range(3), params).results
print()
print(comparison_to_text(compare_runs(runs, inst, configs)))
