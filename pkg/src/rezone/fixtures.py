"""Small hand-checkable districts used by the tests, demos and docs."""
from __future__ import annotations

from shapely.geometry import box

from .instance import (AdjacencyGraph, ConstraintConfig, Instance, PlanningUnit, School,
                       Student)

#: TINY-1 ids: schools A and B, units p1..p4 on a path
A, B = 1, 2
P1, P2, P3, P4 = 101, 102, 103, 104

_TINY_UNITS = {
    # unit: (n_students, n_group, sq_school, miles to A, miles to B)
    P1: (10, 4, A, 1.0, 3.0),
    P2: (10, 6, A, 1.0, 2.0),
    P3: (10, 2, B, 2.0, 1.0),
    P4: (10, 0, B, 3.0, 1.0),
}


def tiny1(config: ConstraintConfig | None = None) -> Instance:
    """Four unit squares in a row, two schools, 40 students (12 in the group).

    p1, p2 are zoned to A and p3, p4 to B; each school enrolls 20 students and
    capacities are 5..35 with 20 desired.
    """
    schools = [School(A, 1, 5, 35, 20, site_unit=P1), School(B, 1, 5, 35, 20, site_unit=P4)]
    units, students = [], []
    sid = 1
    for i, (uid, (n, g, sq, da, db)) in enumerate(_TINY_UNITS.items()):
        geom = box(i, 0, i + 1, 1)
        units.append(PlanningUnit(uid, 1, n, g, sq, geom, (geom.centroid.x, geom.centroid.y)))
        for k in range(n):
            students.append(Student(sid, 1, {1: uid}, sq, k < g, {A: da, B: db}))
            sid += 1
    graph = AdjacencyGraph.from_edges(1, _TINY_UNITS, [(P1, P2), (P2, P3), (P3, P4)],
                                      {(P1, P2): 1.0, (P2, P3): 1.0, (P3, P4): 1.0})
    return Instance.build([1], schools, units, students, {1: graph}, config)


#: two-level fixture ids
E1, E2 = 11, 12
M1, M2 = 21, 22


def two_level(split: bool = True, config: ConstraintConfig | None = None) -> Instance:
    """Elementary units 201..204 and middle units 301..304, each a path of
    four unit squares with 10 resident students.

    E1 = {201, 202}, E2 = {203, 204}; M1 = {301, 302}, M2 = {303, 304}.
    Elementary students of 201 live in middle unit 301, those of 203 and 204
    in 303 and 304.  With ``split`` the students of 202 are divided 2 / 8
    between 302 and 303, so E1 sends 12 students to M1 and 8 to M2; without
    it all of 202 lives in 302 and E1 feeds M1 alone.
    """
    schools = [School(E1, 1, 5, 35, 20, site_unit=201), School(E2, 1, 5, 35, 20, site_unit=204),
               School(M1, 2, 5, 35, 20, site_unit=301), School(M2, 2, 5, 35, 20, site_unit=304)]
    sq = {201: E1, 202: E1, 203: E2, 204: E2, 301: M1, 302: M1, 303: M2, 304: M2}
    site_pos = {E1: 0, E2: 3, M1: 0, M2: 3}
    units, students = [], []
    sid = 1
    for level, base, pair in ((1, 200, (E1, E2)), (2, 300, (M1, M2))):
        for i in range(4):
            uid = base + i + 1
            n_group = (6, 4, 2, 0)[i]
            geom = box(i, 0, i + 1, 1)
            units.append(PlanningUnit(uid, level, 10, n_group, sq[uid], geom,
                                      (geom.centroid.x, geom.centroid.y)))
            dist = {s: 1.0 + abs(i - site_pos[s]) for s in pair}
            for k in range(10):
                if level == 1:
                    up = 301 + i
                    if uid == 202:
                        up = 302 if (k < 2 or not split) else 303
                    res = {1: uid, 2: up}
                else:
                    res = {2: uid}
                students.append(Student(sid, level, res, sq[uid], k < n_group, dist))
                sid += 1
    graphs = {}
    for level, base in ((1, 200), (2, 300)):
        ids = [base + i + 1 for i in range(4)]
        edges = list(zip(ids, ids[1:]))
        graphs[level] = AdjacencyGraph.from_edges(level, ids, edges, {e: 1.0 for e in edges})
    return Instance.build([1, 2], schools, units, students, graphs, config)
