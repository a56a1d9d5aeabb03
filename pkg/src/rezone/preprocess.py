"""Data preparation: adjacency edge pruning, greedy unit merging and the
block-group socioeconomic classification."""
from __future__ import annotations

import math
from dataclasses import replace
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd

from .instance import AdjacencyGraph, PlanningUnit

SES_VARIABLES = ("median_income", "home_ownership", "educ_attainment", "english_prof",
                 "dual_parent")
TERCILE_LABELS = ("lower", "medium", "higher")


def prune_weak_edges(graph: AdjacencyGraph) -> AdjacencyGraph:
    """Drop each high-degree unit's weakest adjacency.

    Units are visited in ascending id order.  A unit with at least three
    neighbours (in the graph as pruned so far) loses the edge with the
    shortest shared boundary (ties go to the smaller neighbour id), unless
    that would leave either endpoint without neighbours.
    """
    missing = [e for e in graph.edges if e not in graph.boundary]
    if missing:
        raise ValueError(f"edges without shared boundary length: {missing[:5]}")
    nb = {v: set(n) for v, n in graph.neighbors.items()}
    for v in sorted(graph.vertices):
        if len(nb[v]) < 3:
            continue
        w = min(nb[v], key=lambda u: (graph.edge_length(v, u), u))
        if len(nb[w]) <= 1:
            continue
        nb[v].discard(w)
        nb[w].discard(v)
    edges = [(a, b) for a, b in graph.edges if b in nb[a]]
    return AdjacencyGraph.from_edges(graph.level, graph.vertices, edges,
                                     {e: graph.boundary[e] for e in edges})


def isoperimetric_quotient(geometry) -> float:
    """``4*pi*area / perimeter**2``: 1 for a disc, smaller for elongated shapes."""
    p = geometry.length
    return 4.0 * math.pi * geometry.area / (p * p) if p > 0 else 0.0


class MergeResult(NamedTuple):
    units: dict[int, PlanningUnit]
    graph: AdjacencyGraph
    mapping: dict[int, int]  # original unit id -> surviving unit id
    reached_target: bool


def merge_units_greedy(units: Mapping[int, PlanningUnit], graph: AdjacencyGraph,
                       target_count: int) -> MergeResult:
    """Merge small or oddly shaped units until ``target_count`` remain.

    Each step takes the least compact unit that has an adjacent unit with the
    same status-quo school and merges it into the neighbour giving the most
    compact union.  The neighbour's id survives.  Stops early, with
    ``reached_target`` false, when no such pair is left.
    """
    from shapely.ops import unary_union

    units = {uid: u for uid, u in units.items() if uid in graph.vertices}
    if any(u.geometry is None for u in units.values()):
        raise ValueError("merging needs a geometry for every unit")
    nb = {v: set(n) for v, n in graph.neighbors.items()}
    lengths = dict(graph.boundary)
    mapping = {uid: uid for uid in units}
    score = {uid: isoperimetric_quotient(u.geometry) for uid, u in units.items()}

    def key(a, b):
        return (a, b) if a < b else (b, a)

    while len(units) > target_count:
        merged = False
        for u in sorted(units, key=lambda x: (score[x], x)):
            legal = [v for v in nb[u] if units[v].sq_school == units[u].sq_school]
            if not legal:
                continue
            best, best_geom, best_score = None, None, -1.0
            for v in sorted(legal):
                geom = unary_union([units[u].geometry, units[v].geometry])
                s = isoperimetric_quotient(geom)
                if s > best_score:
                    best, best_geom, best_score = v, geom, s
            v = best
            a, b = units[u], units[v]
            c = best_geom.centroid
            units[v] = replace(b, n_students=a.n_students + b.n_students,
                               n_group=a.n_group + b.n_group, geometry=best_geom,
                               centroid=(c.x, c.y))
            score[v] = best_score
            for w in nb[u] - {v}:
                lu = lengths.pop(key(u, w), None)
                if w in nb[v]:
                    if lu is not None and key(v, w) in lengths:
                        lengths[key(v, w)] += lu
                else:
                    if lu is not None:
                        lengths[key(v, w)] = lu
                    nb[v].add(w)
                    nb[w].add(v)
                nb[w].discard(u)
            lengths.pop(key(u, v), None)
            nb[v].discard(u)
            del nb[u], units[u], score[u]
            for orig, cur in mapping.items():
                if cur == u:
                    mapping[orig] = v
            merged = True
            break
        if not merged:
            break
    edges = sorted({key(a, b) for a in nb for b in nb[a]})
    out_graph = AdjacencyGraph.from_edges(graph.level, units, edges,
                                          {e: lengths[e] for e in edges if e in lengths})
    return MergeResult(dict(sorted(units.items())), out_graph, mapping,
                       len(units) <= target_count)


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd == 0:
        return np.zeros_like(x, dtype=float)
    return (x - x.mean()) / sd


def _terciles(values: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Tercile (0 lowest) by rank; equal values are ordered by id."""
    order = np.lexsort((ids, values))
    n = len(values)
    out = np.empty(n, dtype=int)
    out[order] = (3 * np.arange(n)) // n
    return out


def classify_ses(block_groups: pd.DataFrame) -> pd.DataFrame:
    """Socioeconomic classification of Census block groups.

    Three standardized indices are built: all five indicator variables, income
    alone, and income with educational attainment.  A block group is
    lower-SES when it falls in the bottom third of any of them; the
    lower/medium/higher label comes from the five-variable index.

    ``block_groups`` needs a ``bg_id`` column and the columns in
    :data:`SES_VARIABLES`.  Returns a frame indexed by ``bg_id``.
    """
    missing_cols = [c for c in ("bg_id",) + SES_VARIABLES if c not in block_groups.columns]
    if missing_cols:
        raise ValueError(f"missing columns: {missing_cols}")
    if len(block_groups) < 3:
        raise ValueError("need at least 3 block groups")
    bad = block_groups[list(SES_VARIABLES)].isna().any(axis=1)
    if bad.any():
        raise ValueError(f"missing indicator values for block groups "
                         f"{block_groups.loc[bad, 'bg_id'].tolist()}")
    df = block_groups.sort_values("bg_id").reset_index(drop=True)
    ids = df["bg_id"].to_numpy()
    z = {c: _zscore(df[c].to_numpy(dtype=float)) for c in SES_VARIABLES}
    composite = _zscore(np.mean([z[c] for c in SES_VARIABLES], axis=0))
    income = z["median_income"]
    income_educ = _zscore((z["median_income"] + z["educ_attainment"]) / 2.0)
    t_comp = _terciles(composite, ids)
    t_inc = _terciles(income, ids)
    t_ie = _terciles(income_educ, ids)
    out = pd.DataFrame({
        "bg_id": ids,
        "index_composite": composite,
        "index_income": income,
        "index_income_educ": income_educ,
        "tercile": [TERCILE_LABELS[t] for t in t_comp],
        "lower_composite": t_comp == 0,
        "lower_income": t_inc == 0,
        "lower_income_educ": t_ie == 0,
    })
    out["lower_ses"] = out[["lower_composite", "lower_income", "lower_income_educ"]].any(axis=1)
    return out.set_index("bg_id")


def read_block_groups(path) -> pd.DataFrame:
    return pd.read_csv(path)
