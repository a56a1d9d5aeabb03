"""Command-line experiment runner.

    rezone run <config.yaml> --data <dir> --out <dir> [--seeds N] [--time-limit S] [--quiet]
    rezone synth <dir> [--rows R --cols C --levels 1 2 --schools 4 2 --clustering K --irregularity J --seed S]
    rezone check <zoning.csv> --data <dir> [--config <config.yaml>]

Config grammar (YAML).  Either a single experiment at the top level or a list
under ``experiments``; top-level keys other than ``experiments`` are defaults
shared by every listed experiment::

    name: demo                 # experiment name (defaults to the preset)
    preset: M-NW               # SQ, S-TR, S-DB, S-C, S-FP, M-NW or M-SW
    objectives: [distance, balance, compact, feeder]   # overrides the preset
    weights:
      mode: uniform            # or survey
      file: weights.csv        # survey mode: precomputed weights, or
      survey: survey.csv       #   survey responses plus
      demographics: demographics.csv
    constraints:
      travel_slack: 1.0
      travel_slack_miles: null
      balance_margin: 0.15
      feeder_threshold: 1
      travel: true
      capacity: true
      contiguity: true
      dissimilarity_bound: false   # presets S-DB, M-NW, M-SW switch it on
      feeder_no_increase: false
    capacity_from_serviceable: false
    calibration:
      mode: compute            # compute, from-file or unit
      file: calibration.csv    # from-file mode
    solver:
      seeds: 3                 # a count (0..n-1) or an explicit list
      time_limit: 60
      max_iterations: 200000
      initial_temperature: null
      cooling_rate: 0.999
      move_mix: [0.8, 0.2]
      reheat_after: 5000
    outputs:
      geojson: false
      trace: false

Relative paths are resolved against the config file's directory.  Outputs go
to ``<out>/<experiment>/`` plus ``comparison.csv``, ``comparison.txt`` and
``manifest.json`` (sha256 of every artifact) at the top of ``<out>``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from . import constraints as C
from .calibration import CalibrationResult, calibrate
from .evaluation import (compare_runs, comparison_to_csv, comparison_to_text, evaluate,
                         export_geojson, export_zoning, read_zoning, write_metrics_json)
from .instance import ConstraintConfig, DataError, Instance, load_instance
from .objectives import (BALANCE, COMPACT, DEFAULT_OBJECTIVES, DISTANCE, FEEDER, OBJECTIVES,
                         ObjectiveConfig, total_objective)
from .solver import InfeasibleStartError, SolverParams, batch_solve
from .weights import SURVEY_OBJECTIVES, derive_weights, read_demographics, read_survey, read_weights

log = logging.getLogger("rezone")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER = 5

ALL4 = frozenset({DISTANCE, BALANCE, COMPACT, FEEDER})
PRESETS: dict[str, dict[str, Any]] = {
    "SQ": {"objectives": frozenset(DEFAULT_OBJECTIVES), "bound": False, "weights": "uniform",
           "solve": False},
    "S-TR": {"objectives": frozenset({DISTANCE}), "bound": False, "weights": "unit"},
    "S-DB": {"objectives": frozenset({BALANCE}), "bound": True, "weights": "unit"},
    "S-C": {"objectives": frozenset({COMPACT}), "bound": False, "weights": "unit"},
    "S-FP": {"objectives": frozenset({FEEDER}), "bound": False, "weights": "unit"},
    "M-NW": {"objectives": ALL4, "bound": True, "weights": "uniform"},
    "M-SW": {"objectives": ALL4, "bound": True, "weights": "survey"},
}
#: per-school weight of every weighted objective in the uniform mode; survey
#: weights sum to one over three objectives, so uniform weights do too
UNIFORM_WEIGHT = 1.0 / len(SURVEY_OBJECTIVES)

_TOP_KEYS = {"name", "preset", "objectives", "weights", "constraints",
             "capacity_from_serviceable", "calibration", "solver", "outputs", "experiments"}
_SECTION_KEYS = {
    "weights": {"mode", "file", "survey", "demographics"},
    "constraints": {"travel_slack", "travel_slack_miles", "balance_margin", "feeder_threshold",
                    "travel", "capacity", "contiguity", "dissimilarity_bound",
                    "feeder_no_increase"},
    "calibration": {"mode", "file"},
    "solver": {"seeds", "time_limit", "max_iterations", "initial_temperature", "cooling_rate",
               "move_mix", "reheat_after"},
    "outputs": {"geojson", "trace"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, file: str | None = None):
        self.line = line
        where = ""
        if file:
            where = f"{file}:{line}: " if line else f"{file}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


# config parsing ----------------------------------------------------------------

def _key_lines(node, prefix=()) -> dict[tuple, int]:
    """1-based line of every mapping key, by key path (list items by index)."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            out.update(_key_lines(v, path))
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            out[prefix + (i,)] = v.start_mark.line + 1
            out.update(_key_lines(v, prefix + (i,)))
    return out


def load_config_file(path: str | Path) -> tuple[dict, dict[tuple, int]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", file=str(path)) from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"YAML syntax error: {problem}", line, str(path)) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1, str(path))
    return data, _key_lines(node) if node is not None else {}


@dataclass
class ExperimentConfig:
    name: str
    preset: str | None
    objectives: frozenset[str]
    weight_mode: str  # unit, uniform or survey
    constraints: ConstraintConfig
    solve: bool = True
    weights_file: Path | None = None
    survey_file: Path | None = None
    demographics_file: Path | None = None
    calibration_mode: str = "compute"
    calibration_file: Path | None = None
    capacity_from_serviceable: bool = False
    seeds: list[int] = field(default_factory=lambda: [0])
    solver: SolverParams = field(default_factory=SolverParams)
    geojson: bool = False
    trace: bool = False


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(data: dict, lines: dict[tuple, int] | None = None,
                 base_dir: str | Path = ".", file: str | None = None) -> list[ExperimentConfig]:
    """Validate a loaded config mapping into experiment configs."""
    lines = lines or {}
    base_dir = Path(base_dir)

    def err(msg, path=()):
        line = None
        p = tuple(path)
        while p and line is None:
            line = lines.get(p)
            p = p[:-1]
        raise ConfigError(msg, line, file)

    for k in data:
        if k not in _TOP_KEYS:
            err(f"unknown key '{k}'", (k,))
    if "experiments" in data:
        exps = data["experiments"]
        if not isinstance(exps, list) or not exps:
            err("'experiments' must be a nonempty list", ("experiments",))
        shared = {k: v for k, v in data.items() if k != "experiments"}
        raw = []
        for i, e in enumerate(exps):
            if not isinstance(e, dict):
                err("each experiment must be a mapping", ("experiments", i))
            raw.append((_merge(shared, e), ("experiments", i)))
    else:
        raw = [(data, ())]

    out = []
    for exp, at in raw:
        def e(msg, *key, _at=at, _exp=exp):
            # prefer the experiment's own line, fall back to the shared default
            for p in (_at + key, key):
                if p in lines:
                    err(msg, p)
            err(msg, _at + key)

        for k in exp:
            if k not in _TOP_KEYS - {"experiments"}:
                e(f"unknown key '{k}'", k)
        for sec, allowed in _SECTION_KEYS.items():
            v = exp.get(sec)
            if v is None:
                continue
            if not isinstance(v, dict):
                e(f"'{sec}' must be a mapping", sec)
            for k in v:
                if k not in allowed:
                    e(f"unknown key '{k}' in '{sec}'", sec, k)
        preset = exp.get("preset")
        if preset is not None and preset not in PRESETS:
            e(f"unknown preset '{preset}' (choose from {', '.join(PRESETS)})", "preset")
        pd = PRESETS.get(preset, {"objectives": frozenset(DEFAULT_OBJECTIVES), "bound": False,
                                  "weights": "uniform"})
        name = str(exp.get("name") or preset or "")
        if not name:
            e("experiment needs a name or a preset", "name")
        objs = exp.get("objectives")
        if objs is None:
            objectives = pd["objectives"]
        else:
            if not isinstance(objs, list) or any(o not in OBJECTIVES for o in objs):
                e(f"objectives must be a list drawn from {list(OBJECTIVES)}", "objectives")
            objectives = frozenset(objs)
        w = exp.get("weights") or {}
        mode = w.get("mode", pd["weights"])
        if mode not in ("unit", "uniform", "survey"):
            e("weights.mode must be unit, uniform or survey", "weights", "mode")

        def path_of(sec, key):
            v = (exp.get(sec) or {}).get(key)
            if v is None:
                return None
            if not isinstance(v, str):
                e(f"{sec}.{key} must be a path", sec, key)
            p = Path(v)
            return p if p.is_absolute() else base_dir / p

        weights_file = path_of("weights", "file")
        survey = path_of("weights", "survey")
        demo = path_of("weights", "demographics")
        if mode == "survey" and weights_file is None and (survey is None or demo is None):
            e("survey weights need weights.file, or weights.survey and weights.demographics",
              "weights")
        c = exp.get("constraints") or {}
        try:
            cons = ConstraintConfig(
                travel_slack=float(c.get("travel_slack", 1.0)),
                travel_slack_miles=(None if c.get("travel_slack_miles") is None
                                    else float(c["travel_slack_miles"])),
                balance_margin=float(c.get("balance_margin", 0.15)),
                feeder_threshold=int(c.get("feeder_threshold", 1)),
                enforce_travel=bool(c.get("travel", True)),
                enforce_capacity=bool(c.get("capacity", True)),
                enforce_contiguity=bool(c.get("contiguity", True)),
                enforce_dissimilarity_bound=bool(c.get("dissimilarity_bound", pd["bound"])),
                enforce_feeder_no_increase=bool(c.get("feeder_no_increase", False)))
        except (TypeError, ValueError) as exc:
            e(f"invalid constraints: {exc}", "constraints")
        cal = exp.get("calibration") or {}
        cal_mode = cal.get("mode", "compute")
        if cal_mode not in ("compute", "from-file", "unit"):
            e("calibration.mode must be compute, from-file or unit", "calibration", "mode")
        cal_file = path_of("calibration", "file")
        if cal_mode == "from-file" and cal_file is None:
            e("calibration mode from-file needs calibration.file", "calibration")
        s = exp.get("solver") or {}
        seeds = s.get("seeds", 1)
        if isinstance(seeds, int) and not isinstance(seeds, bool):
            if seeds < 1:
                e("solver.seeds must be positive", "solver", "seeds")
            seeds = list(range(seeds))
        elif not (isinstance(seeds, list) and seeds
                  and all(isinstance(x, int) and not isinstance(x, bool) for x in seeds)):
            e("solver.seeds must be a count or a list of integers", "solver", "seeds")
        try:
            mix = s.get("move_mix", [0.8, 0.2])
            params = SolverParams(
                seed=seeds[0], time_limit=float(s.get("time_limit", 60.0)),
                max_iterations=int(s.get("max_iterations", 200_000)),
                initial_temperature=(None if s.get("initial_temperature") is None
                                     else float(s["initial_temperature"])),
                cooling_rate=float(s.get("cooling_rate", 0.999)),
                move_mix=tuple(float(x) for x in mix),
                reheat_after=(None if s.get("reheat_after", 5000) is None
                              else int(s.get("reheat_after", 5000))))
        except (TypeError, ValueError) as exc:
            e(f"invalid solver settings: {exc}", "solver")
        o = exp.get("outputs") or {}
        out.append(ExperimentConfig(
            name=name, preset=preset, objectives=objectives, weight_mode=mode,
            constraints=cons, solve=pd.get("solve", True), weights_file=weights_file,
            survey_file=survey, demographics_file=demo, calibration_mode=cal_mode,
            calibration_file=cal_file,
            capacity_from_serviceable=bool(exp.get("capacity_from_serviceable", False)),
            seeds=list(seeds), solver=params, geojson=bool(o.get("geojson", False)),
            trace=bool(o.get("trace", False))))
    names = [x.name for x in out]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError(f"duplicate experiment names: {dup}", file=file)
    return out


def load_config(path: str | Path) -> list[ExperimentConfig]:
    data, lines = load_config_file(path)
    return parse_config(data, lines, Path(path).parent, str(path))


# running -----------------------------------------------------------------------

def school_weights(exp: ExperimentConfig, instance: Instance) -> dict[tuple[int, str], float]:
    if exp.weight_mode == "unit":
        return {}
    if exp.weight_mode == "uniform":
        return {(s, o): UNIFORM_WEIGHT for s in instance.schools for o in SURVEY_OBJECTIVES}
    if exp.weights_file is not None:
        w = read_weights(exp.weights_file)
    else:
        w = derive_weights(read_survey(exp.survey_file), read_demographics(exp.demographics_file),
                           schools=instance.schools).weights
    # schools absent from the weights table count every objective equally
    for s in instance.schools:
        for o in SURVEY_OBJECTIVES:
            w.setdefault((s, o), UNIFORM_WEIGHT)
    return {k: v for k, v in w.items() if k[0] in instance.schools}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(config_path: str | Path, data_dir: str | Path, out_dir: str | Path,
        seeds: int | None = None, time_limit: float | None = None) -> list[Path]:
    """Run every experiment of a config file; returns the written artifacts."""
    exps = load_config(config_path)
    if seeds is not None:
        if seeds < 1:
            raise ConfigError("--seeds must be positive")
        exps = [replace(x, seeds=list(range(seeds)), solver=replace(x.solver, seed=0))
                for x in exps]
    if time_limit is not None:
        if time_limit <= 0:
            raise ConfigError("--time-limit must be positive")
        exps = [replace(x, solver=replace(x.solver, time_limit=float(time_limit))) for x in exps]
    for x in exps:
        for p in (x.weights_file, x.survey_file, x.demographics_file, x.calibration_file):
            if p is not None and not p.exists():
                raise ConfigError(f"experiment {x.name}: file not found: {p}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    instances: dict[tuple, Instance] = {}
    calibrations: dict[tuple, CalibrationResult] = {}
    runs, configs = {}, {}
    for x in exps:
        key = (x.capacity_from_serviceable,)
        if key not in instances:
            instances[key] = load_instance(data_dir,
                                           capacity_from_serviceable=x.capacity_from_serviceable)
        inst = instances[key].with_config(x.constraints)
        d = out / x.name
        d.mkdir(parents=True, exist_ok=True)
        weights = school_weights(x, inst)
        cal = {}
        multi = len(x.objectives) > 1
        if x.calibration_mode == "from-file":
            cal = CalibrationResult.from_csv(x.calibration_file).b
        elif x.calibration_mode == "compute" and multi and x.solve:
            ck = (x.objectives, x.constraints, x.seeds[0], x.solver)
            if ck not in calibrations:
                log.info("%s: calibrating %s", x.name, ", ".join(sorted(x.objectives)))
                calibrations[ck] = calibrate(inst, x.objectives,
                                             replace(x.solver, seed=x.seeds[0]), x.constraints)
            res = calibrations[ck]
            cal = res.b
            written.append(res.to_csv(d / "calibration.csv"))
        cfg = ObjectiveConfig(x.objectives, cal, weights, x.constraints)
        configs[x.name] = cfg
        if not x.solve:
            log.info("%s: evaluating the status quo", x.name)
            rep = C.check_feasible(inst.sq_zoning, inst, cfg)
            obj = total_objective(inst.sq_zoning, inst, cfg).total
            written.append(export_zoning(inst.sq_zoning, inst, d / "zoning.csv"))
            written.append(write_metrics_json(evaluate(inst.sq_zoning, inst, cfg),
                                              d / "metrics.json",
                                              {"objective": obj, "feasible": rep.ok}))
            if x.geojson:
                written.append(export_geojson(inst.sq_zoning, inst, d / "zoning.geojson"))
            runs[x.name] = [inst.sq_zoning]
            continue
        log.info("%s: %d seed(s), objectives %s", x.name, len(x.seeds),
                 ", ".join(sorted(x.objectives)))
        batch = batch_solve(inst, cfg, x.seeds, x.solver)
        if batch.failures:
            for s, msg in batch.failures.items():
                log.error("%s seed %s failed: %s", x.name, s, msg)
            first = next(iter(batch.failures.values()))
            if first.startswith("InfeasibleStartError"):
                raise InfeasibleStartError(f"experiment {x.name}: {first}")
            raise RuntimeError(f"experiment {x.name}: {len(batch.failures)} run(s) failed")
        for seed, r in zip(x.seeds, batch.results):
            rd = d / f"seed_{seed}"
            rd.mkdir(exist_ok=True)
            rep = C.check_feasible(r.best_zoning, inst, cfg)
            if not rep.ok:
                raise RuntimeError(f"experiment {x.name} seed {seed} produced an infeasible "
                                   f"zoning:\n{rep.to_text()}")
            written.append(export_zoning(r.best_zoning, inst, rd / "zoning.csv"))
            written.append(write_metrics_json(
                evaluate(r.best_zoning, inst, cfg), rd / "metrics.json",
                {"objective": r.objective, "seed": seed, "feasible": True}))
            if x.geojson:
                written.append(export_geojson(r.best_zoning, inst, rd / "zoning.geojson"))
            if x.trace:
                tp = rd / "trace.txt"
                tp.write_text("".join(f"{it} {obj!r}\n" for it, _, obj in r.trace),
                              encoding="utf-8")
                written.append(tp)
        summary = {f"{k}.mean": v[0] for k, v in batch.summary.items()}
        summary.update({f"{k}.se": v[1] for k, v in batch.summary.items()})
        summary["n_runs"] = len(batch.results)
        summary["single_sample"] = batch.single_sample
        sp = d / "summary.json"
        with open(sp, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(sp)
        runs[x.name] = batch.results

    inst_any = next(iter(instances.values()))
    rows = compare_runs(runs, inst_any, configs)
    written.append(comparison_to_csv(rows, out / "comparison.csv"))
    tp = out / "comparison.txt"
    tp.write_text(comparison_to_text(rows), encoding="utf-8")
    written.append(tp)
    manifest = {str(p.relative_to(out)): _sha256(p) for p in sorted(set(written))}
    mp = out / "manifest.json"
    with open(mp, "w", encoding="utf-8") as fh:
        json.dump({"artifacts": manifest}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(mp)
    return written


# entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rezone", description="School attendance zone optimizer")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiments of a config file")
    r.add_argument("config")
    r.add_argument("--data", required=True, help="directory with the district CSV files")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seeds", type=int, help="run seeds 0..N-1 instead of the configured ones")
    r.add_argument("--time-limit", type=float, help="seconds per run")
    r.add_argument("--quiet", action="store_true")
    s = sub.add_parser("synth", help="write a synthetic grid district")
    s.add_argument("out")
    s.add_argument("--rows", type=int, default=10)
    s.add_argument("--cols", type=int, default=10)
    s.add_argument("--levels", type=int, nargs="+", default=[1])
    s.add_argument("--schools", type=int, nargs="+", default=[4])
    s.add_argument("--clustering", type=float, default=0.0)
    s.add_argument("--irregularity", type=float, default=0.0,
                   help="noise on the status-quo zone growth")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--quiet", action="store_true")
    c = sub.add_parser("check", help="feasibility report of a zoning")
    c.add_argument("zoning")
    c.add_argument("--data", required=True)
    c.add_argument("--config", help="config whose first experiment sets the constraints")
    c.add_argument("--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            written = run(args.config, args.data, args.out, args.seeds, args.time_limit)
            if not args.quiet:
                print(f"wrote {len(written)} files to {args.out}")
        elif args.command == "synth":
            from .synth import SynthParams, write_synthetic

            params = SynthParams(args.rows, args.cols, tuple(args.levels), tuple(args.schools),
                                 clustering=args.clustering, sq_irregularity=args.irregularity,
                                 seed=args.seed)
            written = write_synthetic(params, args.out)
            if not args.quiet:
                print(f"wrote {len(written)} files to {args.out}")
        elif args.command == "check":
            cfg = ObjectiveConfig()
            if args.config:
                x = load_config(args.config)[0]
                cfg = ObjectiveConfig(x.objectives, constraints=x.constraints)
            inst = load_instance(args.data, cfg.constraints)
            rep = C.check_feasible(read_zoning(args.zoning), inst, cfg)
            print(rep.to_text(), end="")
            return 0 if rep.ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleStartError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
