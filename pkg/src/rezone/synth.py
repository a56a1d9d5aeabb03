"""Synthetic grid districts with controllable segregation.

Every level uses the same rows x cols grid of square cells (one planning unit
per cell and level).  Schools sit at spread-out cells; the status-quo zoning
grows each school's zone outward from its site by distance with a soft
enrollment cap, so zones are contiguous.  ``sq_irregularity`` adds random
noise to the growth order, giving ragged, historically grown zones that leave
room to improve on every objective.  Group membership is drawn per
student with a probability that, as ``clustering`` goes from 0 to 1, moves
from the district share everywhere to the group living only in the left half
of the grid.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from shapely.geometry import box

from .instance import (AdjacencyGraph, ConstraintConfig, Instance, PlanningUnit, School,
                       Student, derive_capacity_bounds, write_instance)

ROAD_FACTOR = 1.3
SERVICEABLE_HEADROOM = 1.15


@dataclass(frozen=True)
class SynthParams:
    rows: int = 10
    cols: int = 10
    levels: tuple[int, ...] = (1,)
    schools_per_level: tuple[int, ...] = (4,)
    students_per_unit: tuple[int, int] = (5, 15)
    clustering: float = 0.0
    group_share: float = 0.45
    cell_miles: float = 0.5
    #: noise on the status-quo growth order, in units of half the grid size
    sq_irregularity: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid must be at least 2 x 2")
        if len(self.levels) != len(self.schools_per_level):
            raise ValueError("need one school count per level")
        if any(k < 1 or k > self.rows * self.cols for k in self.schools_per_level):
            raise ValueError("schools per level must lie in [1, number of cells]")
        lo, hi = self.students_per_unit
        if not 1 <= lo <= hi:
            raise ValueError("students_per_unit must satisfy 1 <= low <= high")
        if not 0.0 <= self.clustering <= 1.0:
            raise ValueError("clustering must lie in [0, 1]")
        if not 0.0 <= self.group_share <= 1.0:
            raise ValueError("group_share must lie in [0, 1]")
        if self.sq_irregularity < 0:
            raise ValueError("sq_irregularity must be non-negative")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols


def unit_id(level: int, row: int, col: int, cols: int) -> int:
    return level * 10_000 + row * cols + col


def school_id(level: int, k: int) -> int:
    return level * 100 + k + 1


def school_sites(rows: int, cols: int, k: int) -> list[tuple[int, int]]:
    """Centers of a near-square lattice of k blocks covering the grid."""
    nc = math.ceil(math.sqrt(k))
    nr = math.ceil(k / nc)
    sites = []
    for i in range(k):
        br, bc = divmod(i, nc)
        r = int((br + 0.5) * rows / nr)
        c = int((bc + 0.5) * cols / nc)
        sites.append((min(r, rows - 1), min(c, cols - 1)))
    if len(set(sites)) != k:
        raise ValueError(f"cannot place {k} schools on a {rows} x {cols} grid")
    return sites


def _grid_neighbors(rows: int, cols: int, r: int, c: int):
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < rows and 0 <= cc < cols:
            yield rr, cc


def grow_zones(rows: int, cols: int, sites: Sequence[tuple[int, int]],
               counts: np.ndarray, cap: float, noise: np.ndarray | None = None
               ) -> np.ndarray:
    """Zone index per cell.  Cells are claimed in order of distance to a
    school whose zone touches them (plus ``noise[k, r, c]`` if given),
    skipping schools already at ``cap``; cells left over join the
    least-loaded adjacent zone."""
    zone = -np.ones((rows, cols), dtype=int)
    load = np.zeros(len(sites))
    heap = []
    for k, (r, c) in enumerate(sites):
        zone[r, c] = k
        load[k] += counts[r, c]
    def push(k, r, c):
        for rr, cc in _grid_neighbors(rows, cols, r, c):
            if zone[rr, cc] < 0:
                sr, sc = sites[k]
                key = math.hypot(rr - sr, cc - sc)
                if noise is not None:
                    key += float(noise[k, rr, cc])
                heapq.heappush(heap, (key, k, rr, cc))
    for k, (r, c) in enumerate(sites):
        push(k, r, c)
    while heap:
        _, k, r, c = heapq.heappop(heap)
        if zone[r, c] >= 0 or load[k] + counts[r, c] > cap:
            continue
        zone[r, c] = k
        load[k] += counts[r, c]
        push(k, r, c)
    while (zone < 0).any():
        progress = False
        for r in range(rows):
            for c in range(cols):
                if zone[r, c] >= 0:
                    continue
                adj = {zone[rr, cc] for rr, cc in _grid_neighbors(rows, cols, r, c)
                       if zone[rr, cc] >= 0}
                if adj:
                    k = min(adj, key=lambda j: (load[j], j))
                    zone[r, c] = k
                    load[k] += counts[r, c]
                    progress = True
        if not progress:
            raise ValueError("grid cells unreachable from every school")
    return zone


def group_probability(col: int, cols: int, share: float, clustering: float) -> float:
    left = col < cols / 2
    return (1.0 - clustering) * share + clustering * min(1.0, 2.0 * share) * left


def generate(params: SynthParams, config: ConstraintConfig | None = None) -> Instance:
    rng = np.random.default_rng(params.seed)
    rows, cols = params.rows, params.cols
    lo, hi = params.students_per_unit
    cell = params.cell_miles
    levels = tuple(params.levels)
    schools, units, students = [], [], []
    graphs = {}
    # students per cell and level first, so every level's draw is independent
    counts = {l: rng.integers(lo, hi + 1, size=(rows, cols)) for l in levels}
    sid_next = 1
    for l, k in zip(levels, params.schools_per_level):
        sites = school_sites(rows, cols, k)
        n_total = int(counts[l].sum())
        serviceable = math.ceil(SERVICEABLE_HEADROOM * n_total / k)
        noise = None
        if params.sq_irregularity > 0:
            noise = rng.random((k, rows, cols)) * params.sq_irregularity * max(rows, cols) / 2
        zone = grow_zones(rows, cols, sites, counts[l], serviceable, noise)
        enrolled = np.bincount(zone.ravel(), weights=counts[l].ravel(), minlength=k)
        for j, (r, c) in enumerate(sites):
            sq = int(enrolled[j])
            cap_min, cap_max = derive_capacity_bounds(sq, serviceable)
            desired = min(max(round(n_total / k), cap_min), cap_max)
            schools.append(School(school_id(l, j), l, cap_min, cap_max, desired,
                                  site_unit=unit_id(l, r, c, cols)))
        edges, lengths = [], {}
        for r in range(rows):
            for c in range(cols):
                u = unit_id(l, r, c, cols)
                for rr, cc in ((r + 1, c), (r, c + 1)):
                    if rr < rows and cc < cols:
                        v = unit_id(l, rr, cc, cols)
                        edges.append((u, v))
                        lengths[(u, v)] = cell
        graphs[l] = AdjacencyGraph.from_edges(
            l, [unit_id(l, r, c, cols) for r in range(rows) for c in range(cols)], edges, lengths)
        for r in range(rows):
            for c in range(cols):
                u = unit_id(l, r, c, cols)
                sq_school = school_id(l, int(zone[r, c]))
                dist = {school_id(l, j): ROAD_FACTOR * cell * max(math.hypot(r - sr, c - sc), 0.5)
                        for j, (sr, sc) in enumerate(sites)}
                p = group_probability(c, cols, params.group_share, params.clustering)
                n = int(counts[l][r, c])
                flags = rng.random(n) < p
                residence = {lv: unit_id(lv, r, c, cols) for lv in levels}
                for f in flags:
                    students.append(Student(sid_next, l, residence, sq_school, bool(f), dist))
                    sid_next += 1
                geom = box(c * cell, (rows - 1 - r) * cell, (c + 1) * cell, (rows - r) * cell)
                units.append(PlanningUnit(u, l, n, int(flags.sum()), sq_school, geom,
                                          (geom.centroid.x, geom.centroid.y)))
    return Instance.build(levels, schools, units, students, graphs, config)


def write_synthetic(params: SynthParams, directory: str | Path) -> list[Path]:
    """Generate and write a district in the CSV/GeoJSON schemas of
    :func:`rezone.instance.load_instance`."""
    return write_instance(generate(params), directory, unit_distances=True)
