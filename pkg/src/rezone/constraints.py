"""Feasibility checks for a zoning, one function per constraint family."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import networkx as nx

from .instance import TRAVEL_TOL, ConstraintConfig, Instance, Zoning
from .objectives import BALANCE, ObjectiveConfig, feeder_terms, school_counts

TRAVEL = "travel"
CAPACITY = "capacity"
CONTIGUITY = "contiguity"
DISSIMILARITY_BOUND = "dissimilarity_bound"
FEEDER_NO_INCREASE = "feeder_no_increase"
FAMILIES = (TRAVEL, CAPACITY, CONTIGUITY, DISSIMILARITY_BOUND, FEEDER_NO_INCREASE)

_TOL = 1e-12


@dataclass(frozen=True)
class Violation:
    family: str
    entity: int  # student, school or level id depending on the family
    value: float
    bound: float
    detail: str = ""


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_family(self, family: str) -> list[Violation]:
        return [v for v in self.violations if v.family == family]

    def rows(self) -> list[tuple[str, int, float, float]]:
        return [(v.family, v.entity, v.value, v.bound) for v in self.violations]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "entity", "value", "bound"])
        w.writerows(self.rows())
        return buf.getvalue()

    def to_text(self) -> str:
        if self.ok:
            return "feasible: no violations\n"
        lines = [f"infeasible: {len(self.violations)} violation(s)"]
        for fam in FAMILIES:
            vs = self.by_family(fam)
            if not vs:
                continue
            lines.append(f"  {fam}: {len(vs)}")
            for v in vs[:20]:
                extra = f" ({v.detail})" if v.detail else ""
                lines.append(f"    entity {v.entity}: value {v.value:g} vs bound {v.bound:g}{extra}")
            if len(vs) > 20:
                lines.append(f"    ... {len(vs) - 20} more")
        return "\n".join(lines) + "\n"


def check_travel(zoning: Zoning, instance: Instance, config: ConstraintConfig
                 ) -> list[Violation]:
    """Students whose travel to their new school exceeds the allowed increase."""
    out = []
    for n in instance.students:
        s = zoning[n.unit]
        bound = config.travel_bound(n)
        d = n.distances.get(s, float("inf"))
        if d > bound + TRAVEL_TOL:
            out.append(Violation(TRAVEL, n.id, d, bound, f"school {s}"))
    return out


def check_capacity(zoning: Zoning, instance: Instance) -> list[Violation]:
    """Schools enrolling outside their capacity range.  An empty school is
    always a violation (closures are not modelled)."""
    out = []
    for l in instance.levels:
        o, _ = school_counts(zoning, instance, l)
        for s, cnt in o.items():
            sch = instance.schools[s]
            if cnt == 0:
                out.append(Violation(CAPACITY, s, 0, max(sch.cap_min, 1), "no students"))
            elif cnt < sch.cap_min:
                out.append(Violation(CAPACITY, s, cnt, sch.cap_min, "below minimum"))
            elif cnt > sch.cap_max:
                out.append(Violation(CAPACITY, s, cnt, sch.cap_max, "above maximum"))
    return out


def component_counts(zoning: Zoning, instance: Instance, level: int) -> dict[int, int]:
    """Connected components of each school's units in the level's adjacency
    graph (0 for a school without units)."""
    g = nx.Graph()
    g.add_nodes_from(instance.units_by_level[level])
    g.add_edges_from((a, b) for a, b in instance.adjacency[level].edges
                     if zoning[a] == zoning[b])
    out = {s: 0 for s in instance.schools_by_level[level]}
    for comp in nx.connected_components(g):
        out[zoning[next(iter(comp))]] += 1
    return out


def check_contiguity(zoning: Zoning, instance: Instance, level: int | None = None
                     ) -> list[Violation]:
    """Schools split into more pieces than in the status quo."""
    levels = instance.levels if level is None else [level]
    out = []
    for l in levels:
        now = component_counts(zoning, instance, l)
        sq = component_counts(instance.sq_zoning, instance, l)
        for s in instance.schools_by_level[l]:
            if now[s] == 0:
                continue
            if now[s] > sq[s]:
                out.append(Violation(CONTIGUITY, s, now[s], sq[s], "components"))
    return out


def dissimilarity_bounds(instance: Instance, margin: float) -> dict[int, float]:
    """Per school: the largest deviation from the district group share that
    the school may have, i.e. its status-quo deviation floored at the margin.
    A school may move toward the district share but never further away."""
    out = {}
    for l in instance.levels:
        share = instance.group_share(l)
        for s in instance.schools_by_level[l]:
            sch = instance.schools[s]
            if sch.sq_enrolled == 0:
                raise ValueError(f"school {s} has no status-quo students")
            out[s] = max(margin, abs(sch.sq_group / sch.sq_enrolled - share))
    return out


def check_dissimilarity_bound(zoning: Zoning, instance: Instance, config: ConstraintConfig
                              ) -> list[Violation]:
    bounds = dissimilarity_bounds(instance, config.balance_margin)
    out = []
    for l in instance.levels:
        share = instance.group_share(l)
        o, og = school_counts(zoning, instance, l)
        for s in o:
            if o[s] == 0:
                continue
            d = abs(og[s] / o[s] - share)
            if d > bounds[s] + _TOL:
                out.append(Violation(DISSIMILARITY_BOUND, s, d, bounds[s]))
    return out


def feeder_counts(zoning: Zoning, instance: Instance, threshold: int) -> dict[int, int]:
    """Total feeder-pattern count per level below the top level."""
    return {l: sum(feeder_terms(zoning, instance, l, threshold).values())
            for l in instance.levels.levels[:-1]}


def check_feeder_no_increase(zoning: Zoning, instance: Instance, config: ConstraintConfig
                             ) -> list[Violation]:
    now = feeder_counts(zoning, instance, config.feeder_threshold)
    sq = feeder_counts(instance.sq_zoning, instance, config.feeder_threshold)
    return [Violation(FEEDER_NO_INCREASE, l, now[l], sq[l], f"level {l}")
            for l in now if now[l] > sq[l]]


def check_feasible(zoning: Zoning, instance: Instance, config: ObjectiveConfig
                   ) -> FeasibilityReport:
    """All constraint families active under ``config``.  The dissimilarity
    bound applies only when balance is a selected objective."""
    c = config.constraints
    v: list[Violation] = []
    if c.enforce_travel:
        v += check_travel(zoning, instance, c)
    if c.enforce_capacity:
        v += check_capacity(zoning, instance)
    if c.enforce_contiguity:
        v += check_contiguity(zoning, instance)
    if c.enforce_dissimilarity_bound and BALANCE in config.selected:
        v += check_dissimilarity_bound(zoning, instance, c)
    if c.enforce_feeder_no_increase:
        v += check_feeder_no_increase(zoning, instance, c)
    return FeasibilityReport(v)
