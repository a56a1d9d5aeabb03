"""Evaluation metrics of a zoning, run comparison tables and map exports."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .instance import Instance, Zoning
from .objectives import ObjectiveConfig, edge_cut_compactness, feeder_patterns, school_counts


@dataclass
class LevelMetrics:
    level: int
    avg_driving_miles: float
    district_dissimilarity: float  # NaN when undefined
    dissimilarity_defined: bool
    feeder_count: int | None  # None at the top level
    n_students: int
    n_group: int
    n_units: int
    rezoned_students: int
    rezoned_group_students: int
    rezoned_units: int
    pct_rezoned_students: float
    pct_rezoned_group_students: float
    pct_rezoned_units: float
    boundary_edges: int = 0  # adjacency edges between units of different schools
    enrolled: dict[int, int] = field(default_factory=dict)
    enrolled_group: dict[int, int] = field(default_factory=dict)


@dataclass
class MetricsReport:
    levels: dict[int, LevelMetrics]

    def __getitem__(self, level: int) -> LevelMetrics:
        return self.levels[level]

    def to_dict(self) -> dict:
        return flatten_metrics(self, include_schools=True)


def _pct(count: int, total: int) -> float:
    return round(100.0 * count / total, 2) if total else 0.0


def district_dissimilarity(o: dict[int, int], og: dict[int, int]) -> float:
    """Unweighted dissimilarity index over schools; NaN if the group is empty
    or makes up everyone."""
    g = sum(og.values())
    n = sum(o.values())
    if g == 0 or g == n:
        return math.nan
    return 0.5 * sum(abs(og[s] / g - (o[s] - og[s]) / (n - g)) for s in o)


def evaluate(zoning: Zoning, instance: Instance, config: ObjectiveConfig | None = None
             ) -> MetricsReport:
    config = config or ObjectiveConfig()
    missing = [u for u in instance.units if u not in zoning.assignment]
    if missing:
        raise ValueError(f"zoning leaves units unassigned: {missing[:5]}")
    sq = instance.sq_zoning
    out = {}
    for l in instance.levels:
        studs = instance.students_by_level[l]
        miles = [n.distances[zoning[n.unit]] for n in studs]
        o, og = school_counts(zoning, instance, l)
        dis = district_dissimilarity(o, og)
        feeder = None
        if instance.levels.next_level(l) is not None:
            feeder = feeder_patterns(zoning, instance, l, config.constraints.feeder_threshold)[0]
        moved = [n for n in studs if zoning[n.unit] != sq[n.unit]]
        units = instance.units_by_level[l]
        r_units = sum(1 for u in units if zoning[u] != sq[u])
        n_g = sum(1 for n in studs if n.in_group)
        r_g = sum(1 for n in moved if n.in_group)
        out[l] = LevelMetrics(
            level=l,
            avg_driving_miles=sum(miles) / len(miles) if miles else math.nan,
            district_dissimilarity=dis,
            dissimilarity_defined=not math.isnan(dis),
            feeder_count=feeder,
            n_students=len(studs), n_group=n_g, n_units=len(units),
            rezoned_students=len(moved), rezoned_group_students=r_g, rezoned_units=r_units,
            pct_rezoned_students=_pct(len(moved), len(studs)),
            pct_rezoned_group_students=_pct(r_g, n_g),
            pct_rezoned_units=_pct(r_units, len(units)),
            boundary_edges=edge_cut_compactness(zoning, instance, l),
            enrolled=o, enrolled_group=og)
    return MetricsReport(out)


_SCALARS = ("avg_driving_miles", "district_dissimilarity", "feeder_count",
            "rezoned_students", "pct_rezoned_students", "rezoned_group_students",
            "pct_rezoned_group_students", "rezoned_units", "pct_rezoned_units",
            "boundary_edges")


def flatten_metrics(report: MetricsReport, include_schools: bool = False) -> dict:
    """Flat ``l<level>.<metric>`` mapping (JSON-ready: NaN becomes None)."""
    out = {}
    for l, m in report.levels.items():
        d = asdict(m)
        for k in _SCALARS:
            v = d[k]
            out[f"l{l}.{k}"] = None if isinstance(v, float) and math.isnan(v) else v
        if include_schools:
            out[f"l{l}.dissimilarity_defined"] = m.dissimilarity_defined
            for s in sorted(m.enrolled):
                out[f"l{l}.school_{s}.enrolled"] = m.enrolled[s]
                out[f"l{l}.school_{s}.enrolled_group"] = m.enrolled_group[s]
    return out


def write_metrics_json(report: MetricsReport, path: str | Path, extra: dict | None = None
                       ) -> Path:
    data = report.to_dict()
    if extra:
        data.update(extra)
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# exports -------------------------------------------------------------------

def export_zoning(zoning: Zoning, instance: Instance, path: str | Path) -> Path:
    """CSV of every unit's school next to its status-quo school."""
    path = Path(path)
    sq = instance.sq_zoning
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "level", "school_id", "sq_school_id", "changed"])
        for u in sorted(zoning.assignment):
            s = zoning[u]
            w.writerow([u, instance.units[u].level, s, sq[u], str(s != sq[u]).lower()])
    return path


def read_zoning(path: str | Path) -> Zoning:
    with open(path, newline="", encoding="utf-8") as fh:
        return Zoning({int(r["unit_id"]): int(r["school_id"]) for r in csv.DictReader(fh)})


def export_geojson(zoning: Zoning, instance: Instance, path: str | Path) -> Path:
    from shapely.geometry import mapping

    missing = [u for u in sorted(zoning.assignment) if instance.units[u].geometry is None]
    if missing:
        raise ValueError(f"no geometry for units {missing[:5]}")
    sq = instance.sq_zoning
    feats = []
    for u in sorted(zoning.assignment):
        unit = instance.units[u]
        feats.append({"type": "Feature",
                      "properties": {"unit_id": u, "level": unit.level,
                                     "school_id": zoning[u], "sq_school_id": sq[u],
                                     "changed": zoning[u] != sq[u]},
                      "geometry": mapping(unit.geometry)})
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh, sort_keys=True)
        fh.write("\n")
    return path


# run comparison --------------------------------------------------------------

_COMPARE = ("objective",) + _SCALARS


@dataclass
class ComparisonRow:
    experiment: str
    level: int
    metric: str
    mean: float | None
    se: float | None  # None when the row reports a single optimal run
    n_runs: int
    optimal: bool


def compare_runs(runs: dict[str, Sequence], instance: Instance,
                 configs: dict[str, ObjectiveConfig]) -> list[ComparisonRow]:
    """Mean and standard error of each metric per experiment and level.

    ``runs`` maps an experiment name to its SolveResults (or to bare zonings,
    as for the status quo).  If any run of an experiment was proven optimal,
    that run is reported alone.
    """
    from .solver import mean_and_se

    rows = []
    for name, results in runs.items():
        results = list(results)
        optimal = [r for r in results if getattr(r, "proven_optimal", False)]
        chosen = optimal[:1] or results
        is_opt = bool(optimal)
        reports = [evaluate(getattr(r, "best_zoning", r), instance, configs[name])
                   for r in chosen]
        objs = [getattr(r, "objective", None) for r in chosen]
        for l in instance.levels:
            for metric in _COMPARE:
                if metric == "objective":
                    vals = [v for v in objs if v is not None]
                else:
                    vals = [getattr(rep[l], metric) for rep in reports]
                    vals = [v for v in vals if v is not None and not
                            (isinstance(v, float) and math.isnan(v))]
                if not vals:
                    rows.append(ComparisonRow(name, l, metric, None, None, len(chosen), is_opt))
                    continue
                m, se = mean_and_se(vals)
                rows.append(ComparisonRow(name, l, metric, m, None if is_opt else se,
                                          len(chosen), is_opt))
    return rows


def comparison_to_csv(rows: list[ComparisonRow], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "level", "metric", "mean", "se", "n_runs", "optimal"])
        for r in rows:
            w.writerow([r.experiment, r.level, r.metric, _fmt(r.mean), _fmt(r.se), r.n_runs,
                        str(r.optimal).lower()])
    return path


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6g}"


def comparison_to_text(rows: list[ComparisonRow]) -> str:
    """Aligned text tables, one per level: experiments as rows, metrics as
    columns, standard errors in parentheses."""
    out = []
    levels = sorted({r.level for r in rows})
    exps = list(dict.fromkeys(r.experiment for r in rows))
    for l in levels:
        cells = {(r.experiment, r.metric): r for r in rows if r.level == l}
        metrics = [m for m in _COMPARE if any((e, m) in cells for e in exps)]
        header = ["experiment"] + metrics
        body = []
        for e in exps:
            line = [e]
            for m in metrics:
                r = cells.get((e, m))
                if r is None or r.mean is None:
                    line.append("-")
                elif r.optimal:
                    line.append(f"{r.mean:.4g} [opt]")
                else:
                    line.append(f"{r.mean:.4g} ({r.se:.2g})")
            body.append(line)
        widths = [max(len(x[i]) for x in [header] + body) for i in range(len(header))]
        out.append(f"level {l}")
        for line in [header] + body:
            out.append("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip())
        out.append("")
    return "\n".join(out)
