"""Four units, two schools: objectives, constraints, search and the oracle.

    python3 demos/tiny_walkthrough.py
"""
from dataclasses import replace

from rezone import constraints as C
from rezone.evaluation import evaluate
from rezone.fixtures import A, B, P2, P3, tiny1
from rezone.objectives import BALANCE, COMPACT, DISTANCE, ObjectiveConfig, total_objective
from rezone.solver import SolverParams, enumerate_optimal, feasible_zonings, solve

inst = tiny1()
sq = inst.sq_zoning
print("status quo:", dict(sq.assignment))
m = evaluate(sq, inst)[1]
print(f"  avg miles {m.avg_driving_miles:.2f}, dissimilarity {m.district_dissimilarity:.3f}")

bound = replace(inst.config, enforce_dissimilarity_bound=True)
setups = {
    "distance only": ObjectiveConfig(frozenset({DISTANCE})),
    "balance only, bounded": ObjectiveConfig(frozenset({BALANCE}), constraints=bound),
    "compactness only": ObjectiveConfig(frozenset({COMPACT})),
}
for label, cfg in setups.items():
    n = len(feasible_zonings(inst, cfg))
    best = enumerate_optimal(inst, cfg)
    found = solve(inst, cfg, SolverParams(seed=0, max_iterations=3000))
    print(f"{label}: {n} feasible zonings, oracle {best.objective:.4g}, "
          f"search {found.objective:.4g} at {found.best_zoning.vector()}")

# moving p3 to A strips B of its group students and breaks the bound
cfg = setups["balance only, bounded"]
for move in ({P2: B}, {P3: A}):
    z = sq.moved(move)
    rep = C.check_feasible(z, inst, cfg)
    obj = total_objective(z, inst, cfg).total
    print(f"move {move}: balance {obj:.4g}, "
          f"{'feasible' if rep.ok else rep.to_text().strip()}")
