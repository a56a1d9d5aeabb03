"""Per-level objective scalings from single-objective runs.

Each objective is first optimized on its own.  The average absolute change
of its terms (per school, or per adjacency edge for compactness) between the
status quo and that run's result measures how much the objective can move;
the scaling is the reciprocal of that change times the number of terms, so
every objective's achievable progress counts roughly the same in the sum.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .instance import ConstraintConfig, Instance
from .objectives import BALANCE, DEFAULT_OBJECTIVES, FEEDER, ObjectiveConfig, objective_terms
from .solver import SolveResult, SolverParams, solve

log = logging.getLogger(__name__)


@dataclass
class CalibrationResult:
    b: dict[tuple[int, str], float]
    n_terms: dict[tuple[int, str], int]
    abs_delta: dict[tuple[int, str], float]
    #: (level, objective) pairs whose terms never moved; b fell back to 1/N
    fallback: set[tuple[int, str]] = field(default_factory=set)
    source_runs: dict[str, SolveResult] = field(default_factory=dict)

    def rows(self) -> list[tuple[int, str, int, float, float]]:
        return [(l, o, self.n_terms[(l, o)], self.abs_delta[(l, o)], self.b[(l, o)])
                for (l, o) in sorted(self.b)]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "objective", "n_terms", "abs_delta", "b", "fallback"])
            for l, o, n, d, b in self.rows():
                w.writerow([l, o, n, repr(d), repr(b), str((l, o) in self.fallback).lower()])
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "CalibrationResult":
        b, n, d, fb = {}, {}, {}, set()
        with open(path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.DictReader(fh), start=2):
                try:
                    key = (int(row["level"]), row["objective"].strip())
                    b[key] = float(row["b"])
                    n[key] = int(row.get("n_terms") or 0)
                    d[key] = float(row.get("abs_delta") or "nan")
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{Path(path).name} row {i}: {exc}") from None
                if b[key] < 0:
                    raise ValueError(f"{Path(path).name} row {i}: negative scaling")
                if (row.get("fallback") or "").strip().lower() == "true":
                    fb.add(key)
        return cls(b, n, d, fb)


def term_changes(before: dict, after: dict) -> list[float]:
    """Absolute change of every term (same keys in both)."""
    return [abs(float(after[k]) - float(before[k])) for k in sorted(before)]


def scaling(n_terms: int, abs_delta: float) -> tuple[float, bool]:
    """(scaling, used_fallback) for ``n_terms`` terms that moved ``abs_delta``
    on average."""
    if n_terms <= 0:
        return 1.0, True
    if abs_delta > 0:
        return 1.0 / (n_terms * abs_delta), False
    return 1.0 / n_terms, True


def single_objective_config(objective: str, constraints: ConstraintConfig) -> ObjectiveConfig:
    """Setup of a calibration run: only ``objective`` selected, unit scalings
    and weights, the same travel/capacity/contiguity constraints, and the
    dissimilarity bound for the balance run."""
    c = replace(constraints, enforce_dissimilarity_bound=(objective == BALANCE),
                enforce_feeder_no_increase=False)
    return ObjectiveConfig(frozenset({objective}), constraints=c)


def calibrate(instance: Instance, objectives: Iterable[str] = DEFAULT_OBJECTIVES,
              params: SolverParams | None = None,
              constraints: ConstraintConfig | None = None) -> CalibrationResult:
    params = params or SolverParams()
    constraints = constraints or instance.config
    b, n_terms, abs_delta, fallback, runs = {}, {}, {}, set(), {}
    sq = instance.sq_zoning
    for obj in sorted(set(objectives)):
        cfg = single_objective_config(obj, constraints)
        assert not cfg.weights and not cfg.calibrations
        res = solve(instance, cfg, params)
        runs[obj] = res
        for l in instance.levels:
            before = objective_terms(sq, instance, l, obj, cfg)
            after = objective_terms(res.best_zoning, instance, l, obj, cfg)
            changes = term_changes(before, after)
            n = len(changes)
            d = sum(changes) / n if n else 0.0
            b[(l, obj)], fb = scaling(n, d)
            n_terms[(l, obj)] = n
            abs_delta[(l, obj)] = d
            if fb:
                fallback.add((l, obj))
                if obj == FEEDER and instance.levels.next_level(l) is None:
                    continue  # no feeder patterns above the top level
                log.warning("objective %s did not move at level %s; scaling falls back to 1/%d",
                            obj, l, max(n, 1))
    return CalibrationResult(b, n_terms, abs_delta, fallback, runs)
