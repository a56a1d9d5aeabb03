"""District data model, CSV ingestion and travel-based candidate elimination.

An :class:`Instance` is an immutable snapshot of one district: the school
levels, the schools and planning units of every level, the students with
their per-level residences and distances, one adjacency graph per level and
the status-quo zoning.  Planning-unit and school ids are unique across all
levels, so a unit or school id alone identifies its level.
"""
from __future__ import annotations

import csv
import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping

log = logging.getLogger(__name__)

#: absolute slack used when comparing travel distances against their bound
TRAVEL_TOL = 1e-9

DEFAULT_FILES = {
    "schools": "schools.csv",
    "units": "units.csv",
    "students": "students.csv",
    "distances": "distances.csv",
    "adjacency": "adjacency.csv",
    "geometry": "units.geojson",
}


class DataError(ValueError):
    """Invalid district data, located by file, row and field where known."""

    def __init__(self, message: str, file: str | None = None, row: int | None = None,
                 field: str | None = None):
        self.file = file
        self.row = row
        self.field = field
        where = []
        if file is not None:
            where.append(str(file))
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{' '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class LevelSet:
    levels: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        levels = tuple(int(l) for l in self.levels)
        if not levels:
            raise ValueError("level set is empty")
        if any(l <= 0 for l in levels):
            raise ValueError("levels must be positive integers")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"levels must be strictly increasing, got {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def max_level(self) -> int:
        return self.levels[-1]

    def next_level(self, level: int) -> int | None:
        """The level students move up to after ``level``, or None at the top."""
        i = self.levels.index(level)
        return self.levels[i + 1] if i + 1 < len(self.levels) else None

    def previous_level(self, level: int) -> int | None:
        i = self.levels.index(level)
        return self.levels[i - 1] if i > 0 else None

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


@dataclass(frozen=True)
class School:
    id: int
    level: int
    cap_min: int
    cap_max: int
    cap_desired: int
    sq_enrolled: int = 0
    sq_group: int = 0
    site_unit: int | None = None

    def __post_init__(self):
        if not 0 <= self.cap_min <= self.cap_desired <= self.cap_max:
            raise ValueError(
                f"school {self.id}: need 0 <= cap_min <= cap_desired <= cap_max, got "
                f"{self.cap_min}, {self.cap_desired}, {self.cap_max}")
        if self.sq_group > self.sq_enrolled:
            raise ValueError(f"school {self.id}: sq_group exceeds sq_enrolled")


@dataclass(frozen=True)
class PlanningUnit:
    id: int
    level: int
    n_students: int
    n_group: int
    sq_school: int
    geometry: Any = None  # shapely geometry
    centroid: tuple[float, float] | None = None

    def __post_init__(self):
        if self.n_students < 0 or self.n_group < 0:
            raise ValueError(f"unit {self.id}: negative student counts")
        if self.n_group > self.n_students:
            raise ValueError(f"unit {self.id}: n_group exceeds n_students")


@dataclass(frozen=True)
class Student:
    id: int
    level: int
    residence_units: Mapping[int, int]
    sq_school: int
    in_group: bool
    distances: Mapping[int, float]

    @property
    def unit(self) -> int:
        """Residential planning unit at the student's current level."""
        return self.residence_units[self.level]


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected unit adjacency of a single level.

    Edges are stored as ``(a, b)`` with ``a < b``.  ``boundary`` optionally maps
    each edge to its shared boundary length.
    """

    level: int
    vertices: frozenset[int]
    edges: tuple[tuple[int, int], ...]
    boundary: Mapping[tuple[int, int], float] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, level: int, vertices: Iterable[int],
                   edges: Iterable[tuple[int, int]],
                   boundary: Mapping[tuple[int, int], float] | None = None) -> "AdjacencyGraph":
        vertices = frozenset(vertices)
        norm: dict[tuple[int, int], None] = {}
        lengths = {}
        boundary = boundary or {}
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on unit {a}")
            if a not in vertices or b not in vertices:
                raise ValueError(f"edge ({a}, {b}) leaves the level-{level} vertex set")
            e = (a, b) if a < b else (b, a)
            norm[e] = None
            if (a, b) in boundary:
                lengths[e] = float(boundary[(a, b)])
            elif (b, a) in boundary:
                lengths[e] = float(boundary[(b, a)])
        return cls(level, vertices, tuple(sorted(norm)), lengths)

    @cached_property
    def neighbors(self) -> dict[int, tuple[int, ...]]:
        nb: dict[int, list[int]] = {v: [] for v in self.vertices}
        for a, b in self.edges:
            nb[a].append(b)
            nb[b].append(a)
        return {v: tuple(sorted(n)) for v, n in nb.items()}

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def edge_length(self, a: int, b: int) -> float:
        return self.boundary[(a, b) if a < b else (b, a)]


@dataclass(frozen=True)
class Zoning:
    """Assignment of every planning unit (all levels) to one school."""

    assignment: Mapping[int, int]

    def __getitem__(self, unit: int) -> int:
        return self.assignment[unit]

    def __iter__(self):
        return iter(self.assignment)

    def __len__(self):
        return len(self.assignment)

    def z(self, unit: int, school: int) -> int:
        """Binary indicator: 1 iff ``unit`` is zoned to ``school``."""
        return int(self.assignment[unit] == school)

    def moved(self, changes: Mapping[int, int]) -> "Zoning":
        new = dict(self.assignment)
        new.update(changes)
        return Zoning(new)

    def vector(self) -> tuple[int, ...]:
        """Assigned schools ordered by unit id (used for tie-breaking)."""
        return tuple(self.assignment[u] for u in sorted(self.assignment))

    def differs_from(self, other: "Zoning") -> list[int]:
        return sorted(u for u in self.assignment if self.assignment[u] != other.assignment[u])


@dataclass(frozen=True)
class ConstraintConfig:
    """Constraint parameters and family toggles.

    ``travel_slack`` is the allowed relative increase of a student's travel
    distance over their status-quo school (a number, or a mapping from student
    id to number).  ``travel_slack_miles`` optionally caps the absolute
    increase.  ``balance_margin`` is the tolerance band around the district
    group share; ``feeder_threshold`` is the minimum number of students that
    makes a lower-to-upper school transition count as a feeder pattern.
    """

    travel_slack: float | Mapping[int, float] = 1.0
    travel_slack_miles: float | None = None
    balance_margin: float = 0.15
    feeder_threshold: int = 1
    enforce_travel: bool = True
    enforce_capacity: bool = True
    enforce_contiguity: bool = True
    enforce_dissimilarity_bound: bool = False
    enforce_feeder_no_increase: bool = False

    def __post_init__(self):
        slacks = (self.travel_slack.values() if isinstance(self.travel_slack, Mapping)
                  else [self.travel_slack])
        if any(m < 0 for m in slacks):
            raise ValueError("travel_slack must be nonnegative")
        if self.travel_slack_miles is not None and self.travel_slack_miles < 0:
            raise ValueError("travel_slack_miles must be nonnegative")
        if not 0 <= self.balance_margin <= 0.5:
            raise ValueError("balance_margin must lie in [0, 0.5]")
        if int(self.feeder_threshold) != self.feeder_threshold or self.feeder_threshold < 1:
            raise ValueError("feeder_threshold must be a positive integer")

    def slack_for(self, student_id: int) -> float:
        if isinstance(self.travel_slack, Mapping):
            return float(self.travel_slack[student_id])
        return float(self.travel_slack)

    def travel_bound(self, student: Student) -> float:
        """Largest admissible travel distance for ``student`` in miles."""
        base = student.distances[student.sq_school]
        bound = (1.0 + self.slack_for(student.id)) * base
        if self.travel_slack_miles is not None:
            bound = min(bound, base + self.travel_slack_miles)
        return bound


@dataclass(frozen=True)
class Instance:
    levels: LevelSet
    schools: Mapping[int, School]
    units: Mapping[int, PlanningUnit]
    students: tuple[Student, ...]
    adjacency: Mapping[int, AdjacencyGraph]
    sq_zoning: Zoning
    candidate_sets: Mapping[int, frozenset[int]]
    config: ConstraintConfig = field(default_factory=ConstraintConfig)

    @classmethod
    def build(cls, levels: LevelSet | Iterable[int], schools: Iterable[School],
              units: Iterable[PlanningUnit], students: Iterable[Student],
              adjacency: Mapping[int, AdjacencyGraph] | None = None,
              config: ConstraintConfig | None = None) -> "Instance":
        """Cross-link and validate raw records, fill status-quo enrollments and
        compute the candidate sets."""
        levels = levels if isinstance(levels, LevelSet) else LevelSet(tuple(levels))
        config = config or ConstraintConfig()
        schools = {s.id: s for s in schools}
        units = {u.id: u for u in units}
        students = tuple(students)
        _validate_records(levels, schools, units, students)
        adjacency = dict(adjacency or {})
        for l in levels:
            vs = [u.id for u in units.values() if u.level == l]
            if l not in adjacency:
                adjacency[l] = AdjacencyGraph.from_edges(l, vs, [])
            elif adjacency[l].vertices != frozenset(vs):
                raise DataError(f"adjacency graph of level {l} does not cover its units")
        enrolled: dict[int, int] = defaultdict(int)
        group: dict[int, int] = defaultdict(int)
        for u in units.values():
            enrolled[u.sq_school] += u.n_students
            group[u.sq_school] += u.n_group
        schools = {sid: replace(s, sq_enrolled=enrolled[sid], sq_group=group[sid])
                   for sid, s in sorted(schools.items())}
        units = dict(sorted(units.items()))
        sq = Zoning({uid: u.sq_school for uid, u in units.items()})
        inst = cls(levels, schools, units, students, adjacency, sq, {}, config)
        object.__setattr__(inst, "candidate_sets", eliminate_candidates(inst, config))
        return inst

    def with_config(self, config: ConstraintConfig) -> "Instance":
        """Same district with candidate sets recomputed for ``config``."""
        inst = replace(self, config=config, candidate_sets={})
        object.__setattr__(inst, "candidate_sets", eliminate_candidates(inst, config))
        return inst

    # derived indices -------------------------------------------------------

    @cached_property
    def units_by_level(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {l: [] for l in self.levels}
        for uid, u in self.units.items():
            out[u.level].append(uid)
        return {l: tuple(sorted(v)) for l, v in out.items()}

    @cached_property
    def schools_by_level(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {l: [] for l in self.levels}
        for sid, s in self.schools.items():
            out[s.level].append(sid)
        return {l: tuple(sorted(v)) for l, v in out.items()}

    @cached_property
    def students_by_level(self) -> dict[int, tuple[Student, ...]]:
        out: dict[int, list[Student]] = {l: [] for l in self.levels}
        for n in self.students:
            out[n.level].append(n)
        return {l: tuple(v) for l, v in out.items()}

    @cached_property
    def unit_students(self) -> dict[int, tuple[Student, ...]]:
        """Students currently at a unit's level who reside in that unit."""
        out: dict[int, list[Student]] = {u: [] for u in self.units}
        for n in self.students:
            out[n.unit].append(n)
        return {u: tuple(v) for u, v in out.items()}

    def n_students(self, level: int) -> int:
        return len(self.students_by_level[level])

    def n_group(self, level: int) -> int:
        return sum(1 for n in self.students_by_level[level] if n.in_group)

    def group_share(self, level: int) -> float:
        """District-wide share of group students at ``level``."""
        return self.n_group(level) / self.n_students(level)


def _validate_records(levels, schools, units, students):
    level_set = set(levels)
    for s in schools.values():
        if s.level not in level_set:
            raise DataError(f"school {s.id} has unknown level {s.level}")
    overlap = set(schools) & set(units)
    if overlap:
        log.debug("ids shared by schools and units: %s", sorted(overlap))
    for u in units.values():
        if u.level not in level_set:
            raise DataError(f"unit {u.id} has unknown level {u.level}")
        if u.sq_school not in schools:
            raise DataError(f"unit {u.id} references unknown school id {u.sq_school}")
        if schools[u.sq_school].level != u.level:
            raise DataError(f"unit {u.id} is zoned to school {u.sq_school} of another level")
    per_unit = defaultdict(lambda: [0, 0])
    seen = set()
    for n in students:
        if n.id in seen:
            raise DataError(f"duplicate student id {n.id}")
        seen.add(n.id)
        if n.level not in n.residence_units:
            raise DataError(f"student {n.id} has no residence unit at level {n.level}")
        for l, p in n.residence_units.items():
            if p not in units or units[p].level != l:
                raise DataError(f"student {n.id} resides in unknown level-{l} unit {p}")
        if n.sq_school not in schools or schools[n.sq_school].level != n.level:
            raise DataError(f"student {n.id} has invalid status-quo school {n.sq_school}")
        if n.sq_school not in n.distances:
            raise DataError(f"student {n.id} has no distance to status-quo school {n.sq_school}")
        if any(d < 0 for d in n.distances.values()):
            raise DataError(f"student {n.id} has a negative distance")
        c = per_unit[n.unit]
        c[0] += 1
        c[1] += int(n.in_group)
    for u in units.values():
        c = per_unit.get(u.id, [0, 0])
        if c[0] != u.n_students or c[1] != u.n_group:
            raise DataError(
                f"unit {u.id} declares {u.n_students} students ({u.n_group} in group) "
                f"but {c[0]} ({c[1]}) reside there")


def eliminate_candidates(instance: Instance, config: ConstraintConfig | None = None
                         ) -> dict[int, frozenset[int]]:
    """Schools each unit may be zoned to without breaking any resident
    student's travel bound.  The status-quo school is always kept."""
    config = config or instance.config
    out = {}
    for uid, unit in instance.units.items():
        residents = instance.unit_students[uid]
        bounds = [(n, config.travel_bound(n)) for n in residents]
        keep = {unit.sq_school}
        for sid in instance.schools_by_level[unit.level]:
            if sid == unit.sq_school:
                continue
            ok = True
            for n, bound in bounds:
                d = n.distances.get(sid)
                if d is None or d > bound + TRAVEL_TOL:
                    ok = False
                    break
            if ok:
                keep.add(sid)
        out[uid] = frozenset(keep)
    return out


def derive_capacity_bounds(sq_enrolled: int, serviceable: int,
                           floor_factor: float = 0.85) -> tuple[int, int]:
    """Capacity range from the status-quo enrollment and the serviceable
    capacity: the upper bound is the larger of the two, the lower bound is the
    smaller one scaled by ``floor_factor``."""
    hi = max(sq_enrolled, serviceable)
    lo = int(floor_factor * min(sq_enrolled, serviceable))
    return lo, hi


# ---------------------------------------------------------------------------
# CSV ingestion


def _resolve_paths(paths: str | Path | Mapping[str, str | Path]) -> dict[str, Path]:
    if isinstance(paths, Mapping):
        return {k: Path(v) for k, v in paths.items()}
    root = Path(paths)
    return {k: root / v for k, v in DEFAULT_FILES.items()}


def _read_rows(path: Path, required: Iterable[str]) -> list[tuple[int, dict[str, str]]]:
    if not path.exists():
        raise DataError("missing file", file=path.name)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise DataError("missing column", file=path.name, row=1, field=col)
        # row numbers count the header as row 1
        return [(i + 2, row) for i, row in enumerate(reader)]


def _num(row: dict[str, str], key: str, path: Path, rowno: int, kind=int,
         optional: bool = False, nonneg: bool = True):
    raw = (row.get(key) or "").strip()
    if raw == "":
        if optional:
            return None
        raise DataError("missing value", file=path.name, row=rowno, field=key)
    try:
        value = kind(float(raw)) if kind is int and "." in raw else kind(raw)
    except ValueError:
        raise DataError(f"cannot parse {raw!r}", file=path.name, row=rowno, field=key) from None
    if nonneg and value < 0:
        raise DataError(f"negative value {value}", file=path.name, row=rowno, field=key)
    return value


def _bool(raw: str, path: Path, rowno: int, key: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "t", "yes", "y"):
        return True
    if v in ("0", "false", "f", "no", "n", ""):
        return False
    raise DataError(f"cannot parse boolean {raw!r}", file=path.name, row=rowno, field=key)


def load_instance(paths: str | Path | Mapping[str, str | Path],
                  config: ConstraintConfig | None = None, *,
                  capacity_from_serviceable: bool = False,
                  capacity_floor_factor: float = 0.85) -> Instance:
    """Load a district from its CSV files.

    ``paths`` is either a directory holding the default file names or a
    mapping from file role (schools, units, students, distances, adjacency,
    geometry) to path.  When ``capacity_from_serviceable`` is set, blank
    ``cap_min``/``cap_max`` cells are derived from a ``serviceable`` column
    with :func:`derive_capacity_bounds`.
    """
    files = _resolve_paths(paths)
    config = config or ConstraintConfig()

    p = files["units"]
    unit_rows = _read_rows(p, ["unit_id", "level", "sq_school", "n_students", "n_group"])
    unit_rec = {}
    for rowno, row in unit_rows:
        uid = _num(row, "unit_id", p, rowno)
        if uid in unit_rec:
            raise DataError(f"duplicate unit id {uid}", file=p.name, row=rowno, field="unit_id")
        unit_rec[uid] = dict(
            rowno=rowno, level=_num(row, "level", p, rowno),
            sq_school=_num(row, "sq_school", p, rowno),
            n_students=_num(row, "n_students", p, rowno),
            n_group=_num(row, "n_group", p, rowno))

    p = files["schools"]
    school_rows = _read_rows(p, ["school_id", "level"])
    sq_counts: dict[int, int] = defaultdict(int)
    for r in unit_rec.values():
        sq_counts[r["sq_school"]] += r["n_students"]
    schools = []
    school_ids = set()
    for rowno, row in school_rows:
        sid = _num(row, "school_id", p, rowno)
        if sid in school_ids:
            raise DataError(f"duplicate school id {sid}", file=p.name, row=rowno, field="school_id")
        school_ids.add(sid)
        lo = _num(row, "cap_min", p, rowno, optional=True)
        hi = _num(row, "cap_max", p, rowno, optional=True)
        desired = _num(row, "cap_desired", p, rowno, optional=True)
        if capacity_from_serviceable and (lo is None or hi is None):
            serv = _num(row, "serviceable", p, rowno)
            lo_d, hi_d = derive_capacity_bounds(sq_counts[sid], serv, capacity_floor_factor)
            lo = lo_d if lo is None else lo
            hi = hi_d if hi is None else hi
            if desired is None:
                desired = min(max(serv, lo), hi)
        for key, value in (("cap_min", lo), ("cap_max", hi), ("cap_desired", desired)):
            if value is None:
                raise DataError("missing value", file=p.name, row=rowno, field=key)
        site = _num(row, "site_unit", p, rowno, optional=True)
        try:
            schools.append(School(sid, _num(row, "level", p, rowno), lo, hi, desired,
                                  site_unit=site))
        except ValueError as exc:
            raise DataError(str(exc), file=p.name, row=rowno) from None
    for uid, r in unit_rec.items():
        if r["sq_school"] not in school_ids:
            raise DataError(f"unknown school id {r['sq_school']}", file=files["units"].name,
                            row=r["rowno"], field="sq_school")
    for s in schools:
        if s.site_unit is not None and s.site_unit not in unit_rec:
            raise DataError(f"unknown unit id {s.site_unit}", file=files["schools"].name,
                            field="site_unit")

    levels = LevelSet(tuple(sorted({s.level for s in schools})))

    geometry = {}
    gpath = files.get("geometry")
    if gpath is not None and gpath.exists():
        geometry = read_unit_geometry(gpath)

    units = []
    for uid, r in unit_rec.items():
        geom = geometry.get(uid)
        cen = (geom.centroid.x, geom.centroid.y) if geom is not None else None
        try:
            units.append(PlanningUnit(uid, r["level"], r["n_students"], r["n_group"],
                                      r["sq_school"], geom, cen))
        except ValueError as exc:
            raise DataError(str(exc), file=files["units"].name, row=r["rowno"]) from None

    # distances: per student, or per unit in synthetic mode
    p = files["distances"]
    if not p.exists():
        raise DataError("missing file", file=p.name)
    with open(p, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    by_unit = "unit_id" in header and "student_id" not in header
    key = "unit_id" if by_unit else "student_id"
    dist_rows = _read_rows(p, [key, "school_id", "miles"])
    dist: dict[int, dict[int, float]] = defaultdict(dict)
    for rowno, row in dist_rows:
        owner = _num(row, key, p, rowno)
        sid = _num(row, "school_id", p, rowno)
        if sid not in school_ids:
            raise DataError(f"unknown school id {sid}", file=p.name, row=rowno, field="school_id")
        if by_unit and owner not in unit_rec:
            raise DataError(f"unknown unit id {owner}", file=p.name, row=rowno, field="unit_id")
        dist[owner][sid] = _num(row, "miles", p, rowno, kind=float)

    p = files["students"]
    stud_rows = _read_rows(p, ["student_id", "level", "sq_school", "in_group"])
    with open(p, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    unit_cols = {int(m.group(1)): c for c in header if (m := re.fullmatch(r"unit_l(\d+)", c))}
    students = []
    seen = set()
    for rowno, row in stud_rows:
        nid = _num(row, "student_id", p, rowno)
        if nid in seen:
            raise DataError(f"duplicate student id {nid}", file=p.name, row=rowno,
                            field="student_id")
        seen.add(nid)
        level = _num(row, "level", p, rowno)
        if level not in levels.levels:
            raise DataError(f"unknown level {level}", file=p.name, row=rowno, field="level")
        sq = _num(row, "sq_school", p, rowno)
        if sq not in school_ids:
            raise DataError(f"unknown school id {sq}", file=p.name, row=rowno, field="sq_school")
        res = {}
        for l, col in unit_cols.items():
            u = _num(row, col, p, rowno, optional=True)
            if u is None:
                continue
            if u not in unit_rec or unit_rec[u]["level"] != l:
                raise DataError(f"unknown level-{l} unit id {u}", file=p.name, row=rowno, field=col)
            res[l] = u
        if level not in res:
            raise DataError(f"no residence unit at the student's own level {level}",
                            file=p.name, row=rowno, field=unit_cols.get(level, f"unit_l{level}"))
        d = dist.get(res[level] if by_unit else nid)
        if not d or sq not in d:
            raise DataError(f"no distance to status-quo school {sq}", file=files["distances"].name,
                            field=key)
        students.append(Student(nid, level, res, sq, _bool(row["in_group"], p, rowno, "in_group"),
                                dict(d)))

    # consistency of declared unit counts with the students file
    counts: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for n in students:
        c = counts[n.unit]
        c[0] += 1
        c[1] += int(n.in_group)
    for uid, r in unit_rec.items():
        c = counts.get(uid, [0, 0])
        if c[0] != r["n_students"]:
            raise DataError(f"declares {r['n_students']} students but the students file has "
                            f"{c[0]}", file=files["units"].name, row=r["rowno"],
                            field="n_students")
        if c[1] != r["n_group"]:
            raise DataError(f"declares {r['n_group']} group students but the students file "
                            f"has {c[1]}", file=files["units"].name, row=r["rowno"],
                            field="n_group")

    p = files["adjacency"]
    adjacency = {}
    if p.exists():
        adj_rows = _read_rows(p, ["level", "unit_a", "unit_b"])
        edges: dict[int, list] = defaultdict(list)
        lengths: dict[int, dict] = defaultdict(dict)
        for rowno, row in adj_rows:
            l = _num(row, "level", p, rowno)
            a = _num(row, "unit_a", p, rowno)
            b = _num(row, "unit_b", p, rowno)
            for col, u in (("unit_a", a), ("unit_b", b)):
                if u not in unit_rec or unit_rec[u]["level"] != l:
                    raise DataError(f"unknown level-{l} unit id {u}", file=p.name, row=rowno,
                                    field=col)
            if a == b:
                raise DataError("self-loop", file=p.name, row=rowno, field="unit_b")
            edges[l].append((a, b))
            ln = _num(row, "shared_boundary_len", p, rowno, kind=float, optional=True)
            if ln is not None:
                lengths[l][(a, b)] = ln
        for l in levels:
            vs = [u for u, r in unit_rec.items() if r["level"] == l]
            adjacency[l] = AdjacencyGraph.from_edges(l, vs, edges.get(l, []), lengths.get(l))

    for n in students:
        if n.sq_school != unit_rec[n.unit]["sq_school"]:
            log.warning("student %s status-quo school %s differs from unit %s's school %s",
                        n.id, n.sq_school, n.unit, unit_rec[n.unit]["sq_school"])

    return Instance.build(levels, schools, units, students, adjacency, config)


def read_unit_geometry(path: str | Path) -> dict[int, Any]:
    """Shapely geometries of a GeoJSON FeatureCollection keyed by ``unit_id``."""
    from shapely.geometry import shape

    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    out = {}
    for i, feat in enumerate(data.get("features", [])):
        props = feat.get("properties") or {}
        if "unit_id" not in props:
            raise DataError("feature without unit_id", file=Path(path).name, row=i,
                            field="unit_id")
        out[int(props["unit_id"])] = shape(feat["geometry"])
    return out


def write_instance(instance: Instance, directory: str | Path, *,
                   unit_distances: bool = False) -> list[Path]:
    """Write ``instance`` in the CSV schemas read by :func:`load_instance`.

    With ``unit_distances`` the distances file holds one row per (unit, school)
    taken from the first resident student, which is exact when every resident
    shares its unit's distances.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(name, header, rows):
        path = d / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    def fmt(x):
        return "" if x is None else repr(x) if isinstance(x, float) else str(x)

    dump("schools.csv", ["school_id", "level", "cap_min", "cap_max", "cap_desired", "site_unit"],
         [[s.id, s.level, s.cap_min, s.cap_max, s.cap_desired, fmt(s.site_unit)]
          for s in instance.schools.values()])
    dump("units.csv", ["unit_id", "level", "sq_school", "n_students", "n_group"],
         [[u.id, u.level, u.sq_school, u.n_students, u.n_group] for u in instance.units.values()])
    lv = list(instance.levels)
    dump("students.csv",
         ["student_id", "level", "sq_school", "in_group"] + [f"unit_l{l}" for l in lv],
         [[n.id, n.level, n.sq_school, int(n.in_group)]
          + [fmt(n.residence_units.get(l)) for l in lv]
          for n in sorted(instance.students, key=lambda n: n.id)])
    if unit_distances:
        rows = []
        for uid in instance.units:
            res = instance.unit_students[uid]
            if res:
                rows += [[uid, sid, fmt(float(m))] for sid, m in sorted(res[0].distances.items())]
        dump("distances.csv", ["unit_id", "school_id", "miles"], rows)
    else:
        dump("distances.csv", ["student_id", "school_id", "miles"],
             [[n.id, sid, fmt(float(m))]
              for n in sorted(instance.students, key=lambda n: n.id)
              for sid, m in sorted(n.distances.items())])
    rows = []
    for l, g in instance.adjacency.items():
        for a, b in g.edges:
            rows.append([l, a, b, fmt(g.boundary.get((a, b)))])
    dump("adjacency.csv", ["level", "unit_a", "unit_b", "shared_boundary_len"], rows)
    if any(u.geometry is not None for u in instance.units.values()):
        from shapely.geometry import mapping

        feats = [{"type": "Feature", "properties": {"unit_id": u.id, "level": u.level},
                  "geometry": mapping(u.geometry)}
                 for u in instance.units.values() if u.geometry is not None]
        path = d / "units.geojson"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"type": "FeatureCollection", "features": feats}, fh, sort_keys=True)
            fh.write("\n")
        written.append(path)
    return written
