"""Multi-level school attendance zone optimization."""
from .calibration import CalibrationResult, calibrate
from .constraints import FeasibilityReport, Violation, check_feasible
from .evaluation import MetricsReport, compare_runs, evaluate, export_geojson, export_zoning
from .instance import (AdjacencyGraph, ConstraintConfig, DataError, Instance, LevelSet,
                       PlanningUnit, School, Student, Zoning, eliminate_candidates,
                       load_instance, write_instance)
from .objectives import (DEFAULT_OBJECTIVES, OBJECTIVES, ObjectiveBreakdown, ObjectiveConfig,
                         total_objective)
from .solver import (BatchResult, InfeasibleStartError, SearchSpaceTooLarge, SolveResult,
                     SolverParams, batch_solve, enumerate_optimal, solve)
from .synth import SynthParams, generate
from .weights import SurveyResponse, derive_weights, impute_race

__version__ = "0.1.0"
