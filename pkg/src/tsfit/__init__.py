"""Adaptive T-spline surface fitting for scattered height-field point clouds."""

from .fitting import (FitConfig, FitResult, Method, Observation, SolverError,
                      assemble, error_indicators, fit, mark, mta_update,
                      solve_ls)
from .io import (AffineMap2D, PointCloud, diff_surfaces, load_surface,
                 parametrize, read_xyz, save_surface, write_xyz)
from .mc import Experiment, run_experiment, write_experiment
from .metrics import FitReport, evaluate, write_reports
from .splines import InputError, cubic_bspline, cubic_bspline_general
from .surface import (TSplineSpace, TSplineSurface, UncoveredPointError,
                      tensor_knot_vectors)
from .synthdata import (SurfaceKind, SyntheticSpec, add_outliers, apply_gap,
                        exact_surface, sample, sample_with_truth)
from .tmesh import Anchor, Cell, ParamRect, TMesh

__version__ = "0.1.0"

__all__ = [
    "AffineMap2D", "Anchor", "Cell", "Experiment", "FitConfig", "FitReport",
    "FitResult", "InputError", "Method", "Observation", "ParamRect",
    "PointCloud", "SolverError", "SurfaceKind", "SyntheticSpec", "TMesh",
    "TSplineSpace", "TSplineSurface", "UncoveredPointError", "add_outliers",
    "apply_gap", "assemble", "cubic_bspline", "cubic_bspline_general",
    "diff_surfaces", "error_indicators", "evaluate", "exact_surface", "fit",
    "load_surface", "mark", "mta_update", "parametrize", "read_xyz",
    "run_experiment", "sample", "sample_with_truth", "save_surface",
    "solve_ls", "tensor_knot_vectors", "write_reports", "write_xyz",
    "write_experiment", "__version__",
]
