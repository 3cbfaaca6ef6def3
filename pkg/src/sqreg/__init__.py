"""Spline quantile regression.

Linear quantile-regression coefficients treated as smooth functions of the
quantile level, estimated jointly over a level grid by penalized
optimization: cubic splines with a squared-curvature penalty (solved as a
quadratic program) or linear splines with a total-variation penalty on the
slopes (solved as a linear program).  Includes AIC/BIC smoothing-parameter
selection, bootstrap confidence bands, derivative estimation, and a Monte
Carlo harness.
"""

__version__ = "0.1.0"

from .assembly import Dataset, build_lp, build_qp, spar_to_c
from .bootstrap import Band, band, resample
from .estimator import SplineQuantileRegressor
from .exceptions import DataError, RankDeficiencyError, SolverError, SqregError
from .fit import (SqrFit, eval_coef, eval_deriv, fit_qr, fit_sqr,
                  fit_sqr_subset, predict_density_recip, predict_quantile)
from .lp_ipm import LpSolution, SolverReport, default_init, solve_bounded_dual, solve_qr
from .qp_ipm import QpSolution, dual_objective, solve_qp
from .selection import CriterionCurve, criterion, select_spar
from .simlab import McReport, SimModel, generate, mae, run_mc
from .splines import QuantileGrid, SplineBasis, delta_phidot, make_grid, penalty_matrix

__all__ = [
    "__version__",
    "Band",
    "CriterionCurve",
    "DataError",
    "Dataset",
    "LpSolution",
    "McReport",
    "QpSolution",
    "QuantileGrid",
    "RankDeficiencyError",
    "SimModel",
    "SolverError",
    "SolverReport",
    "SplineBasis",
    "SplineQuantileRegressor",
    "SqregError",
    "SqrFit",
    "band",
    "build_lp",
    "build_qp",
    "criterion",
    "default_init",
    "delta_phidot",
    "dual_objective",
    "eval_coef",
    "eval_deriv",
    "fit_qr",
    "fit_sqr",
    "fit_sqr_subset",
    "generate",
    "mae",
    "make_grid",
    "penalty_matrix",
    "predict_density_recip",
    "predict_quantile",
    "resample",
    "run_mc",
    "select_spar",
    "solve_bounded_dual",
    "solve_qp",
    "solve_qr",
    "spar_to_c",
]
