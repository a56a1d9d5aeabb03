"""Objective terms of the rezoning model and their calibrated weighted sum.

Every evaluator here works from scratch at student level; the solver keeps
its own incremental aggregates and is checked against these functions.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from .instance import ConstraintConfig, Instance, Zoning

DISTANCE = "distance"
BALANCE = "balance"
COMPACT = "compact"
FEEDER = "feeder"
CAPACITY = "capacity"
OBJECTIVES = (DISTANCE, BALANCE, COMPACT, FEEDER, CAPACITY)
#: objectives optimized by default; capacity is left to the capacity constraint
DEFAULT_OBJECTIVES = frozenset({DISTANCE, BALANCE, COMPACT, FEEDER})


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveConfig:
    """Selected objectives with their per-level calibrations and per-school
    weights.  Missing calibrations and weights default to 1."""

    selected: frozenset[str] = DEFAULT_OBJECTIVES
    calibrations: Mapping[tuple[int, str], float] = field(default_factory=dict)
    weights: Mapping[tuple[int, str], float] = field(default_factory=dict)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)

    def __post_init__(self):
        sel = frozenset(self.selected)
        unknown = sel - set(OBJECTIVES)
        if unknown:
            raise ValueError(f"unknown objectives: {sorted(unknown)}")
        object.__setattr__(self, "selected", sel)
        if any(v < 0 for v in self.calibrations.values()):
            raise ValueError("calibrations must be nonnegative")
        if any(v < 0 for v in self.weights.values()):
            raise ValueError("weights must be nonnegative")

    def calibration(self, level: int, objective: str) -> float:
        return float(self.calibrations.get((level, objective), 1.0))

    def weight(self, school: int, objective: str) -> float:
        return float(self.weights.get((school, objective), 1.0))


def _w(weights: Mapping[int, float] | None, school: int) -> float:
    return 1.0 if weights is None else float(weights.get(school, 1.0))


def school_counts(zoning: Zoning, instance: Instance, level: int
                  ) -> tuple[dict[int, int], dict[int, int]]:
    """Students and group students zoned to each school of ``level``."""
    o = {s: 0 for s in instance.schools_by_level[level]}
    og = dict(o)
    for n in instance.students_by_level[level]:
        s = zoning[n.unit]
        o[s] += 1
        og[s] += int(n.in_group)
    return o, og


# per-term values -----------------------------------------------------------

def distance_terms(zoning: Zoning, instance: Instance, level: int) -> dict[int, float]:
    """Per school: travel of its zoned students over their status-quo travel."""
    num = {s: 0.0 for s in instance.schools_by_level[level]}
    den = dict(num)
    cnt = {s: 0 for s in num}
    for n in instance.students_by_level[level]:
        s = zoning[n.unit]
        if s not in n.distances:
            raise ObjectiveError(f"student {n.id} has no distance to school {s}")
        num[s] += n.distances[s]
        den[s] += n.distances[n.sq_school]
        cnt[s] += 1
    out = {}
    for s in num:
        if cnt[s] == 0:
            raise ObjectiveError(f"school {s} has no zoned students")
        if den[s] == 0:
            raise ObjectiveError(f"school {s}: zoned students have zero status-quo travel")
        out[s] = num[s] / den[s]
    return out


def capacity_terms(zoning: Zoning, instance: Instance, level: int) -> dict[int, float]:
    o, _ = school_counts(zoning, instance, level)
    out = {}
    for s, cnt in o.items():
        desired = instance.schools[s].cap_desired
        if desired <= 0:
            raise ObjectiveError(f"school {s} has no desired capacity")
        out[s] = abs(1.0 - cnt / desired)
    return out


def school_deviation(o: int, og: int, share: float) -> float:
    """Absolute gap between a school's group share and the district share."""
    return abs(og / o - share)


def balance_terms(zoning: Zoning, instance: Instance, level: int, margin: float
                  ) -> dict[int, float]:
    """Per school ``max(deviation, margin)``."""
    o, og = school_counts(zoning, instance, level)
    share = instance.group_share(level)
    out = {}
    for s in o:
        if o[s] == 0:
            raise ObjectiveError(f"school {s} has no zoned students")
        out[s] = max(school_deviation(o[s], og[s], share), margin)
    return out


def compact_terms(zoning: Zoning, instance: Instance, level: int
                  ) -> dict[tuple[int, int], int]:
    """Cut indicator of every adjacency edge of ``level``."""
    return {(a, b): int(zoning[a] != zoning[b]) for a, b in instance.adjacency[level].edges}


def feeder_matrix(zoning: Zoning, instance: Instance, level: int) -> Counter:
    """Number of ``level`` students per (zoned school, next-level school)."""
    nxt = instance.levels.next_level(level)
    flows: Counter = Counter()
    if nxt is None:
        return flows
    for n in instance.students_by_level[level]:
        up = n.residence_units.get(nxt)
        if up is None:
            raise ObjectiveError(f"student {n.id} has no residence unit at level {nxt}")
        flows[(zoning[n.unit], zoning[up])] += 1
    return flows


def feeder_terms(zoning: Zoning, instance: Instance, level: int, threshold: int
                 ) -> dict[int, int]:
    """Per lower-level school: number of next-level schools it feeds."""
    out = {s: 0 for s in instance.schools_by_level[level]}
    if instance.levels.next_level(level) is None:
        return out
    for (s1, _), cnt in feeder_matrix(zoning, instance, level).items():
        if cnt >= threshold:
            out[s1] += 1
    return out


# objective functions -------------------------------------------------------

def travel_distance_ratio(zoning: Zoning, instance: Instance, level: int,
                          weights: Mapping[int, float] | None = None) -> float:
    terms = distance_terms(zoning, instance, level)
    return sum(_w(weights, s) * t for s, t in terms.items())


def capacity_objective(zoning: Zoning, instance: Instance, level: int,
                       weights: Mapping[int, float] | None = None) -> float:
    terms = capacity_terms(zoning, instance, level)
    return sum(_w(weights, s) * t for s, t in terms.items())


def balance_objective(zoning: Zoning, instance: Instance, level: int,
                      weights: Mapping[int, float] | None = None,
                      margin: float = 0.15) -> float:
    terms = balance_terms(zoning, instance, level, margin)
    return sum(_w(weights, s) * t for s, t in terms.items())


def edge_cut_compactness(zoning: Zoning, instance: Instance, level: int) -> int:
    return sum(compact_terms(zoning, instance, level).values())


def feeder_patterns(zoning: Zoning, instance: Instance, level: int, threshold: int = 1,
                    weights: Mapping[int, float] | None = None) -> tuple[int, float]:
    """(number of feeder patterns from ``level`` to the next level, the same
    count weighted by the lower school's weight).  Zero at the top level."""
    terms = feeder_terms(zoning, instance, level, threshold)
    return sum(terms.values()), sum(_w(weights, s) * t for s, t in terms.items())


# totals --------------------------------------------------------------------

@dataclass
class ObjectiveBreakdown:
    raw: dict[tuple[int, str], float]
    calibrated: dict[tuple[int, str], float]
    terms: dict[tuple[int, str], dict]
    selected: frozenset[str]
    total: float

    def rows(self) -> list[dict]:
        return [{"level": l, "objective": o, "raw": self.raw[(l, o)],
                 "calibrated": self.calibrated.get((l, o), 0.0),
                 "selected": o in self.selected}
                for (l, o) in sorted(self.raw)]


def objective_terms(zoning: Zoning, instance: Instance, level: int, objective: str,
                    config: ObjectiveConfig) -> dict:
    """Unweighted per-school (per-edge for compactness) term values."""
    c = config.constraints
    if objective == DISTANCE:
        return distance_terms(zoning, instance, level)
    if objective == BALANCE:
        return balance_terms(zoning, instance, level, c.balance_margin)
    if objective == CAPACITY:
        return capacity_terms(zoning, instance, level)
    if objective == COMPACT:
        return compact_terms(zoning, instance, level)
    if objective == FEEDER:
        return feeder_terms(zoning, instance, level, c.feeder_threshold)
    raise ValueError(objective)


def level_objective(zoning: Zoning, instance: Instance, level: int, objective: str,
                    config: ObjectiveConfig) -> tuple[float, dict]:
    """(weighted objective value at ``level``, unweighted terms)."""
    terms = objective_terms(zoning, instance, level, objective, config)
    if objective == COMPACT:
        return float(sum(terms.values())), terms
    return sum(config.weight(s, objective) * t for s, t in terms.items()), terms


def total_objective(zoning: Zoning, instance: Instance, config: ObjectiveConfig
                    ) -> ObjectiveBreakdown:
    """Calibrated weighted sum over levels and selected objectives.

    Unselected objectives are still evaluated for diagnostics (NaN when they
    cannot be evaluated) but add nothing to the total.
    """
    raw, cal, terms = {}, {}, {}
    total = 0.0
    for l in instance.levels:
        for obj in OBJECTIVES:
            if obj in config.selected:
                value, t = level_objective(zoning, instance, l, obj, config)
                cal[(l, obj)] = config.calibration(l, obj) * value
                total += cal[(l, obj)]
            else:
                try:
                    value, t = level_objective(zoning, instance, l, obj, config)
                except ObjectiveError:
                    value, t = math.nan, {}
            raw[(l, obj)] = value
            terms[(l, obj)] = t
    return ObjectiveBreakdown(raw, cal, terms, config.selected, total)
