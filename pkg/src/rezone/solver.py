"""Anytime search over feasible zonings and an exhaustive optimality oracle.

:func:`solve` runs a feasibility-preserving simulated annealing search that
starts from the status-quo zoning.  Moves reassign one unit to another of its
candidate schools or swap two adjacent units across a boundary (with feeder
patterns selected, some moves target a unit behind the smallest pattern of a
split school, and some chain two or three boundary reassignments); a move that
breaks any active constraint is rejected before the acceptance test, so every
visited zoning is feasible.  :func:`enumerate_optimal` scans every assignment
of small instances and is used to verify the search.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
import random
import statistics
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import constraints as C
from .instance import TRAVEL_TOL, Instance, Zoning
from .objectives import (BALANCE, CAPACITY, COMPACT, DISTANCE, FEEDER, ObjectiveBreakdown,
                         ObjectiveConfig, ObjectiveError, total_objective)

log = logging.getLogger(__name__)

THREADS_ENV = "REZONE_THREADS"
ENUMERATION_LIMIT = 10**7
_REBUILD_EVERY = 10_000
_SAMPLE_MOVES = 1000
_FEEDER_GUIDED = 0.25
_CHAIN_SHARE = 0.1
_TOL = 1e-12


class InfeasibleStartError(RuntimeError):
    """The status-quo zoning violates the active constraints."""


class SearchSpaceTooLarge(RuntimeError):
    def __init__(self, size: int, limit: int):
        self.size = size
        super().__init__(f"search space of {size:.3g} assignments exceeds the limit {limit:.3g}")


@dataclass(frozen=True)
class SolverParams:
    seed: int = 0
    time_limit: float = 60.0
    max_iterations: int = 200_000
    initial_temperature: float | None = None  # None: calibrate from sampled moves
    cooling_rate: float = 0.999
    move_mix: tuple[float, float] = (0.8, 0.2)  # (single-unit reassign, boundary swap)
    reheat_after: int | None = 5_000  # iterations without improvement before reheating
    trace_log: str | None = None
    debug: bool = False

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if len(self.move_mix) != 2 or min(self.move_mix) < 0 or abs(sum(self.move_mix) - 1) > 1e-9:
            raise ValueError("move_mix must be two probabilities summing to 1")
        if not 0 < self.cooling_rate <= 1:
            raise ValueError("cooling_rate must lie in (0, 1]")


@dataclass
class SolveResult:
    best_zoning: Zoning
    best_breakdown: ObjectiveBreakdown
    iterations: int
    wall_time: float
    proven_optimal: bool
    seed: int | None = None
    accepted: int = 0
    #: improvements as (iteration, wall seconds, objective)
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.best_breakdown.total


def solver_candidates(instance: Instance, config: ObjectiveConfig) -> dict[int, tuple[int, ...]]:
    """Admissible schools per unit under ``config`` (status quo first is not
    implied; tuples are sorted by school id)."""
    c = config.constraints
    if not c.enforce_travel:
        out = {}
        for uid, u in instance.units.items():
            res = instance.unit_students[uid]
            out[uid] = tuple(s for s in instance.schools_by_level[u.level]
                             if s == u.sq_school or all(s in n.distances for n in res))
        return out
    cand = instance.candidate_sets if c == instance.config else \
        instance.with_config(c).candidate_sets
    return {u: tuple(sorted(s)) for u, s in cand.items()}


class _IndexedSet:
    """Set with O(1) insert, remove and uniform sampling."""

    def __init__(self):
        self.items: list = []
        self.pos: dict = {}

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x):
        i = self.pos.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def __len__(self):
        return len(self.items)


class _Search:
    """Mutable search state with incrementally maintained aggregates."""

    def __init__(self, instance: Instance, config: ObjectiveConfig):
        self.inst = instance
        self.cfg = config
        c = config.constraints
        self.sel = config.selected
        self.margin = c.balance_margin
        self.eps = c.feeder_threshold
        self.cand = solver_candidates(instance, config)
        self.movable = [u for u in instance.units if len(self.cand[u]) > 1]
        self.level_of = {u: x.level for u, x in instance.units.items()}
        self.school_level = {s: x.level for s, x in instance.schools.items()}
        self.nbrs = {}
        for l, g in instance.adjacency.items():
            self.nbrs.update(g.neighbors)
        self.share = {l: (instance.group_share(l) if instance.n_students(l) else 0.0)
                      for l in instance.levels}

        # per-unit aggregates over resident students
        self.n = {}
        self.ng = {}
        self.sqd = {}
        self.dist = {}
        for uid in instance.units:
            res = instance.unit_students[uid]
            self.n[uid] = len(res)
            self.ng[uid] = sum(1 for s in res if s.in_group)
            self.sqd[uid] = sum(s.distances[s.sq_school] for s in res)
            self.dist[uid] = {sch: sum(s.distances[sch] for s in res)
                              for sch in self.cand[uid]}

        # student flows between a lower unit and the unit it resides in one level up
        up = defaultdict(lambda: defaultdict(int))
        down = defaultdict(lambda: defaultdict(int))
        for l in instance.levels:
            nxt = instance.levels.next_level(l)
            if nxt is None:
                continue
            for s in instance.students_by_level[l]:
                q = s.residence_units.get(nxt)
                if q is None:
                    raise ObjectiveError(f"student {s.id} has no residence unit at level {nxt}")
                up[s.unit][q] += 1
                down[q][s.unit] += 1
        self.up = {p: tuple(sorted(d.items())) for p, d in up.items()}
        self.down = {q: tuple(sorted(d.items())) for q, d in down.items()}

        self.b = {(l, o): config.calibration(l, o) for l in instance.levels for o in self.sel}
        self.w = {(s, o): config.weight(s, o) for s in instance.schools for o in self.sel}

        # share of proposals aimed at the weakest feeder pattern of a split school
        self.feeder_guided = _FEEDER_GUIDED if FEEDER in self.sel and self.up else 0.0

        self.enf_cap = c.enforce_capacity
        self.enf_contig = c.enforce_contiguity
        self.enf_dissim = c.enforce_dissimilarity_bound and BALANCE in self.sel
        self.enf_feeder = c.enforce_feeder_no_increase
        self.dissim_bound = (C.dissimilarity_bounds(instance, self.margin)
                             if self.enf_dissim else {})

        self.y = dict(instance.sq_zoning.assignment)
        self.rebuild()
        self.sq_comps = dict(self.comps)
        self.sq_patterns = dict(self.level_patterns)

    # -- full recomputation ---------------------------------------------------

    def rebuild(self):
        inst, y = self.inst, self.y
        self.members = {s: set() for s in inst.schools}
        for u, s in y.items():
            self.members[s].add(u)
        self.o = {s: 0 for s in inst.schools}
        self.og = dict(self.o)
        self.num = {s: 0.0 for s in inst.schools}
        self.den = dict(self.num)
        for u, s in y.items():
            self.o[s] += self.n[u]
            self.og[s] += self.ng[u]
            self.num[s] += self.dist[u][s]
            self.den[s] += self.sqd[u]
        self.comps = {s: self._count_components(s) for s in inst.schools}
        self.cut = {l: 0 for l in inst.levels}
        self.cut_edges = _IndexedSet()
        for l, g in inst.adjacency.items():
            for a, b in g.edges:
                if y[a] != y[b]:
                    self.cut[l] += 1
                    self.cut_edges.add((a, b))
        self.flow = defaultdict(int)
        for p, links in self.up.items():
            for q, c in links:
                self.flow[(y[p], y[q])] += c
        self.patterns = {s: 0 for s in inst.schools}
        for (s1, _), c in self.flow.items():
            if c >= self.eps:
                self.patterns[s1] += 1
        self.level_patterns = {l: 0 for l in inst.levels}
        for s, k in self.patterns.items():
            self.level_patterns[self.school_level[s]] += k
        self.cost = self.full_cost()

    def _count_components(self, s) -> int:
        left = set(self.members[s])
        k = 0
        while left:
            k += 1
            stack = [left.pop()]
            while stack:
                v = stack.pop()
                for w in self.nbrs.get(v, ()):
                    if w in left:
                        left.discard(w)
                        stack.append(w)
        return k

    # -- objective --------------------------------------------------------------

    def school_cost(self, s) -> float:
        """Calibrated, weighted contribution of school ``s`` (excluding
        compactness).  Raises ObjectiveError when a term is undefined."""
        l = self.school_level[s]
        total = 0.0
        sel = self.sel
        if DISTANCE in sel:
            if self.o[s] == 0 or self.den[s] <= 0:
                raise ObjectiveError(f"distance ratio undefined for school {s}")
            total += self.b[(l, DISTANCE)] * self.w[(s, DISTANCE)] * self.num[s] / self.den[s]
        if BALANCE in sel:
            if self.o[s] == 0:
                raise ObjectiveError(f"school {s} has no zoned students")
            d = abs(self.og[s] / self.o[s] - self.share[l])
            total += self.b[(l, BALANCE)] * self.w[(s, BALANCE)] * max(d, self.margin)
        if CAPACITY in sel:
            total += (self.b[(l, CAPACITY)] * self.w[(s, CAPACITY)]
                      * abs(1.0 - self.o[s] / self.inst.schools[s].cap_desired))
        if FEEDER in sel and self.patterns[s]:
            total += self.b[(l, FEEDER)] * self.w[(s, FEEDER)] * self.patterns[s]
        return total

    def compact_cost(self) -> float:
        if COMPACT not in self.sel:
            return 0.0
        return sum(self.b[(l, COMPACT)] * k for l, k in self.cut.items())

    def full_cost(self) -> float:
        return sum(self.school_cost(s) for s in self.inst.schools) + self.compact_cost()

    # -- moves --------------------------------------------------------------

    def _apply_unit(self, p, b):
        y = self.y
        a = y[p]
        if a == b:
            return
        y[p] = b
        self.members[a].discard(p)
        self.members[b].add(p)
        n, ng = self.n[p], self.ng[p]
        self.o[a] -= n
        self.o[b] += n
        self.og[a] -= ng
        self.og[b] += ng
        dp = self.dist[p]
        self.num[a] -= dp[a]
        self.num[b] += dp[b]
        self.den[a] -= self.sqd[p]
        self.den[b] += self.sqd[p]
        l = self.level_of[p]
        for q in self.nbrs.get(p, ()):
            yq = y[q]
            e = (p, q) if p < q else (q, p)
            was, now = yq != a, yq != b
            if was and not now:
                self.cut[l] -= 1
                self.cut_edges.discard(e)
            elif now and not was:
                self.cut[l] += 1
                self.cut_edges.add(e)
        for q, c in self.up.get(p, ()):
            s2 = y[q]
            self._shift_flow((a, s2), (b, s2), c)
        for r, c in self.down.get(p, ()):
            s1 = y[r]
            self._shift_flow((s1, a), (s1, b), c)

    def _shift_flow(self, old, new, c):
        flow, eps = self.flow, self.eps
        before = flow[old]
        flow[old] = before - c
        if before >= eps > before - c:
            self.patterns[old[0]] -= 1
            self.level_patterns[self.school_level[old[0]]] -= 1
        before = flow[new]
        flow[new] = before + c
        if before < eps <= before + c:
            self.patterns[new[0]] += 1
            self.level_patterns[self.school_level[new[0]]] += 1

    def _touched(self, changes):
        """Schools whose membership changes and schools whose cost may change."""
        moved = set()
        costed = set()
        for p, b in changes:
            a = self.y[p]
            moved.add(a)
            moved.add(b)
            for r, _ in self.down.get(p, ()):
                costed.add(self.y[r])
        costed |= moved
        return moved, costed

    def try_move(self, changes):
        """Apply ``changes`` if they keep the zoning feasible.  Returns the
        cost delta and an undo token, or None (state untouched) if rejected."""
        moved, costed = self._touched(changes)
        before_costs = {s: self.school_cost(s) for s in costed}
        before_compact = self.compact_cost()
        snap = {s: (self.num[s], self.den[s], self.comps[s]) for s in moved}
        olds = [(p, self.y[p]) for p, _ in changes]
        for p, b in changes:
            self._apply_unit(p, b)
        undo = (olds, snap)
        if not self._feasible(moved, changes):
            self.undo(undo)
            return None
        try:
            after = sum(self.school_cost(s) for s in costed)
        except ObjectiveError:
            self.undo(undo)
            return None
        delta = after - sum(before_costs.values()) + self.compact_cost() - before_compact
        return delta, undo

    def undo(self, token):
        olds, snap = token
        for p, a in reversed(olds):
            self._apply_unit(p, a)
        for s, (num, den, comps) in snap.items():
            self.num[s], self.den[s], self.comps[s] = num, den, comps

    def _feasible(self, moved, changes) -> bool:
        for s in moved:
            o = self.o[s]
            if o <= 0:
                return False
            if self.enf_cap:
                sch = self.inst.schools[s]
                if o < sch.cap_min or o > sch.cap_max:
                    return False
            if self.enf_dissim:
                d = abs(self.og[s] / o - self.share[self.school_level[s]])
                if d > self.dissim_bound[s] + _TOL:
                    return False
        if self.enf_feeder:
            for l, k in self.level_patterns.items():
                if k > self.sq_patterns[l]:
                    return False
        if self.enf_contig:
            for s in moved:
                k = self._count_components(s)
                self.comps[s] = k
                if k > self.sq_comps[s]:
                    return False
        return True

    def _feeder_move(self, rng: random.Random):
        """Move one unit behind the smallest pattern of a school that feeds
        several next-level schools, so repeated moves can dissolve it."""
        weakest = None
        for (s1, s2), c in self.flow.items():
            if c >= self.eps and self.patterns[s1] > 1 and (weakest is None or c < weakest[0]):
                weakest = (c, s1, s2)
        if weakest is None:
            return None
        _, s1, s2 = weakest
        pairs = [(p, q) for p in sorted(self.members[s1]) for q, _ in self.up.get(p, ())
                 if self.y[q] == s2]
        p, q = pairs[rng.randrange(len(pairs))]
        u = p if rng.random() < 0.5 else q
        options = sorted({self.y[v] for v in self.nbrs.get(u, ())} - {self.y[u]})
        options = [s for s in options if s in self.cand[u]]
        if not options:
            return None
        return [(u, options[rng.randrange(len(options))])]

    def _boundary_move(self, rng: random.Random):
        edges = self.cut_edges.items
        if not edges:
            return None
        u, v = edges[rng.randrange(len(edges))]
        if rng.random() < 0.5:
            u, v = v, u
        target = self.y[v]
        return [(u, target)] if target in self.cand[u] else None

    def _chain_move(self, rng: random.Random, steps: int):
        """Boundary reassignments drawn one after another on the evolving
        zoning and returned as a single move, so that cyclic shifts whose
        intermediate states are infeasible can still be reached."""
        changes, olds, snap = [], [], {}
        for _ in range(steps):
            move = self._boundary_move(rng)
            if move is None or any(move[0][0] == p for p, _ in changes):
                break
            p, b = move[0]
            a = self.y[p]
            for s in (a, b):
                snap.setdefault(s, (self.num[s], self.den[s]))
            olds.append((p, a))
            self._apply_unit(p, b)
            changes.append((p, b))
        for p, a in reversed(olds):
            self._apply_unit(p, a)
        for s, (num, den) in snap.items():
            self.num[s], self.den[s] = num, den
        return changes if len(changes) > 1 else None

    def propose(self, rng: random.Random, mix_reassign: float):
        """A random candidate move as a list of (unit, new school)."""
        if self.feeder_guided and rng.random() < self.feeder_guided:
            return self._feeder_move(rng)
        r = rng.random()
        if r < _CHAIN_SHARE:
            return self._chain_move(rng, rng.choice((2, 3)))
        edges = self.cut_edges.items
        if edges and rng.random() >= mix_reassign:
            u, v = edges[rng.randrange(len(edges))]
            a, b = self.y[u], self.y[v]
            if b in self.cand[u] and a in self.cand[v]:
                return [(u, b), (v, a)]
            return None
        if edges and rng.random() < 0.9:
            return self._boundary_move(rng)
        if not self.movable:
            return None
        p = self.movable[rng.randrange(len(self.movable))]
        options = [s for s in self.cand[p] if s != self.y[p]]
        return [(p, options[rng.randrange(len(options))])]


def _check_warm_start(instance: Instance, config: ObjectiveConfig):
    report = C.check_feasible(instance.sq_zoning, instance, config)
    if not report.ok:
        raise InfeasibleStartError("status-quo zoning is infeasible:\n" + report.to_text())


def _initial_temperature(search: _Search, rng: random.Random, mix: float) -> float:
    deltas = []
    for _ in range(_SAMPLE_MOVES):
        move = search.propose(rng, mix)
        if move is None:
            continue
        res = search.try_move(move)
        if res is None:
            continue
        delta, token = res
        search.undo(token)
        if abs(delta) > _TOL:
            deltas.append(abs(delta))
    if not deltas:
        return 1.0
    # median uphill move accepted with probability 1/2
    return statistics.median(deltas) / math.log(2.0)


def solve(instance: Instance, config: ObjectiveConfig, params: SolverParams | None = None
          ) -> SolveResult:
    """Best feasible zoning found by simulated annealing from the status quo.

    Deterministic for a given (instance, config, params) as long as the
    iteration limit, not the time limit, ends the run.
    """
    params = params or SolverParams()
    t0 = time.perf_counter()
    _check_warm_start(instance, config)
    search = _Search(instance, config)
    rng = random.Random(params.seed)
    mix = params.move_mix[0]
    temp0 = (params.initial_temperature if params.initial_temperature is not None
             else _initial_temperature(search, rng, mix))
    temp = temp0

    best_cost = search.cost
    best_y = dict(search.y)
    trace = [(0, time.perf_counter() - t0, best_cost)]
    log_fh = open(params.trace_log, "w", encoding="utf-8") if params.trace_log else None
    if log_fh:
        log_fh.write(f"{trace[0][1]:.6f} {best_cost!r}\n")
    it = accepted = since_best = 0
    deadline = t0 + params.time_limit
    try:
        while it < params.max_iterations and time.perf_counter() < deadline:
            it += 1
            since_best += 1
            move = search.propose(rng, mix)
            if move is None:
                continue
            res = search.try_move(move)
            if res is None:
                continue
            delta, token = res
            if delta > _TOL and (temp <= 0 or rng.random() >= math.exp(-delta / temp)):
                search.undo(token)
                continue
            accepted += 1
            search.cost += delta
            temp *= params.cooling_rate
            if accepted % _REBUILD_EVERY == 0:
                search.rebuild()
            if params.debug:
                rep = C.check_feasible(Zoning(dict(search.y)), instance, config)
                assert rep.ok, rep.to_text()
            if search.cost < best_cost - _TOL * max(1.0, abs(best_cost)):
                best_cost = search.cost
                best_y = dict(search.y)
                since_best = 0
                now = time.perf_counter() - t0
                trace.append((it, now, best_cost))
                if log_fh:
                    log_fh.write(f"{now:.6f} {best_cost!r}\n")
            elif params.reheat_after and since_best >= params.reheat_after:
                # restart from the incumbent at the initial temperature
                search.y = dict(best_y)
                search.rebuild()
                temp = temp0
                since_best = 0
    finally:
        if log_fh:
            log_fh.close()

    zoning = Zoning(dict(sorted(best_y.items())))
    breakdown = total_objective(zoning, instance, config)
    if abs(breakdown.total - best_cost) > 1e-9 * max(1.0, abs(best_cost)):
        log.warning("incremental objective %r drifted from recomputed %r", best_cost,
                    breakdown.total)
    return SolveResult(zoning, breakdown, it, time.perf_counter() - t0, False,
                       seed=params.seed, accepted=accepted, trace=trace)


# ---------------------------------------------------------------------------
# exhaustive oracle


def _level_assignments(instance: Instance, config: ObjectiveConfig, level: int,
                       cand: dict[int, tuple[int, ...]]) -> list[dict[int, int]]:
    """Assignments of one level that pass the single-level constraint
    families, with the other levels held at the status quo."""
    units = instance.units_by_level[level]
    if not units:
        return [{}]
    schools = instance.schools_by_level[level]
    col = {s: i for i, s in enumerate(schools)}
    sizes = [len(cand[u]) for u in units]
    total = int(np.prod(sizes, dtype=object))
    # mixed-radix decoding of every combination
    idx = np.arange(total, dtype=np.int64)
    choice = np.empty((total, len(units)), dtype=np.int64)
    for j in range(len(units) - 1, -1, -1):
        choice[:, j] = idx % sizes[j]
        idx //= sizes[j]
    school_of = np.empty_like(choice)
    for j, u in enumerate(units):
        school_of[:, j] = np.array([col[s] for s in cand[u]])[choice[:, j]]
    n = np.array([len(instance.unit_students[u]) for u in units])
    ng = np.array([sum(s.in_group for s in instance.unit_students[u]) for u in units])
    onehot = school_of[:, :, None] == np.arange(len(schools))[None, None, :]
    o = (onehot * n[None, :, None]).sum(axis=1)
    og = (onehot * ng[None, :, None]).sum(axis=1)
    keep = (o > 0).all(axis=1)
    c = config.constraints
    if c.enforce_capacity:
        lo = np.array([instance.schools[s].cap_min for s in schools])
        hi = np.array([instance.schools[s].cap_max for s in schools])
        keep &= ((o >= lo) & (o <= hi)).all(axis=1)
    if c.enforce_dissimilarity_bound and BALANCE in config.selected:
        bounds = C.dissimilarity_bounds(instance, c.balance_margin)
        bnd = np.array([bounds[s] for s in schools])
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.abs(og / o - instance.group_share(level))
        keep &= (d <= bnd + _TOL).all(axis=1)
    out = []
    sq = instance.sq_zoning
    for row in school_of[keep]:
        assign = {u: schools[k] for u, k in zip(units, row)}
        if c.enforce_contiguity and C.check_contiguity(sq.moved(assign), instance, level):
            continue
        out.append(assign)
    return out


def enumerate_optimal(instance: Instance, config: ObjectiveConfig,
                      limit: int = ENUMERATION_LIMIT) -> SolveResult:
    """True optimum by exhaustive enumeration of candidate assignments.

    Ties are broken toward the status quo, then toward the lexicographically
    smallest assignment vector ordered by unit id.  Refuses when the candidate product exceeds ``limit``.
    """
    t0 = time.perf_counter()
    cand = solver_candidates(instance, config)
    size = 1
    for u in instance.units:
        size *= len(cand[u])
    if size > limit:
        raise SearchSpaceTooLarge(size, limit)
    _check_warm_start(instance, config)
    per_level = [_level_assignments(instance, config, l, cand) for l in instance.levels]
    sq_vec = instance.sq_zoning.vector()
    best = None
    best_key = None
    count = 0
    for combo in itertools.product(*per_level):
        assign = {}
        for part in combo:
            assign.update(part)
        zoning = Zoning(dict(sorted(assign.items())))
        count += 1
        if not C.check_feasible(zoning, instance, config).ok:
            continue
        try:
            bd = total_objective(zoning, instance, config)
        except ObjectiveError:
            continue
        # the status quo wins ties, then the lexicographically smallest vector
        vec = (zoning.vector() != sq_vec, zoning.vector())
        if best is None or bd.total < best_key[0] - _TOL * max(1.0, abs(best_key[0])) or (
                abs(bd.total - best_key[0]) <= _TOL * max(1.0, abs(best_key[0]))
                and vec < best_key[1]):
            best, best_key = (zoning, bd), (bd.total, vec)
    if best is None:
        raise InfeasibleStartError("no feasible zoning")
    return SolveResult(best[0], best[1], count, time.perf_counter() - t0, True)


def feasible_zonings(instance: Instance, config: ObjectiveConfig,
                     limit: int = ENUMERATION_LIMIT) -> list[Zoning]:
    """Every feasible zoning of a small instance (the oracle's search space)."""
    cand = solver_candidates(instance, config)
    size = 1
    for u in instance.units:
        size *= len(cand[u])
    if size > limit:
        raise SearchSpaceTooLarge(size, limit)
    per_level = [_level_assignments(instance, config, l, cand) for l in instance.levels]
    out = []
    for combo in itertools.product(*per_level):
        assign = {}
        for part in combo:
            assign.update(part)
        z = Zoning(dict(sorted(assign.items())))
        if C.check_feasible(z, instance, config).ok:
            out.append(z)
    return out


# ---------------------------------------------------------------------------
# batches of seeded runs


@dataclass
class BatchResult:
    results: list[SolveResult]
    summary: dict[str, tuple[float, float]]  # metric -> (mean, standard error)
    single_sample: bool
    failures: dict[int, str] = field(default_factory=dict)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_one(args):
    instance, config, params = args
    try:
        return solve(instance, config, params)
    except Exception as exc:  # reported per seed, the batch continues
        return exc


def mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    vals = [float(v) for v in values]
    m = statistics.fmean(vals)
    if len(vals) < 2:
        return m, 0.0
    return m, statistics.stdev(vals) / math.sqrt(len(vals))


def batch_solve(instance: Instance, config: ObjectiveConfig, seeds: Sequence[int],
                params: SolverParams | None = None, workers: int | None = None
                ) -> BatchResult:
    """Independent runs, one per seed, collected in seed order.

    ``workers`` defaults to the ``REZONE_THREADS`` environment variable; more
    than one worker runs seeds in separate processes.
    """
    from dataclasses import replace as _replace

    from .evaluation import evaluate, flatten_metrics

    if not seeds:
        raise ValueError("need at least one seed")
    params = params or SolverParams()
    jobs = [(instance, config, _replace(params, seed=s, trace_log=None)) for s in seeds]
    workers = workers or thread_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            outs = list(ex.map(_run_one, jobs))
    else:
        outs = [_run_one(j) for j in jobs]
    results, failures = [], {}
    for seed, out in zip(seeds, outs):
        if isinstance(out, Exception):
            failures[seed] = f"{type(out).__name__}: {out}"
        else:
            results.append(out)
    metrics = defaultdict(list)
    for r in results:
        metrics["objective"].append(r.objective)
        for k, v in flatten_metrics(evaluate(r.best_zoning, instance, config)).items():
            if v is not None and not (isinstance(v, float) and math.isnan(v)):
                metrics[k].append(v)
    summary = {k: mean_and_se(v) for k, v in sorted(metrics.items()) if v}
    return BatchResult(results, summary, len(results) == 1, failures)
