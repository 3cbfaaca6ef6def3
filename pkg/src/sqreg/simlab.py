"""Simulation models and the Monte Carlo harness.

Three data-generating processes drive the accuracy experiments: a linear
regression with a quantile-dependent intercept, a quantile autoregression
with piecewise-linear lag coefficient, and a random-coefficient regression
with piecewise-quadratic slope.  The runner repeats generate / fit /
evaluate over deterministic substreams and aggregates total and pointwise
mean absolute errors.
"""

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import ndtri

from . import lp_ipm
from .assembly import Dataset
from .exceptions import DataError, SolverError
from .fit import fit_qr, fit_sqr, fit_sqr_subset
from .splines import QuantileGrid

__all__ = ["SimModel", "McReport", "generate", "mae", "run_mc"]

QAR_BURN_IN = 100


@dataclass(frozen=True)
class SimModel:
    """A simulation model: kind in {linear14, qar15, rancoef17}."""

    kind: str
    n: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("linear14", "qar15", "rancoef17"):
            raise DataError(f"unknown simulation model {self.kind!r}")
        if self.n < 10:
            raise DataError(f"need n >= 10, got {self.n}")


def generate(model: SimModel):
    """Draw one dataset from the model.

    Returns
    -------
    (Dataset, truth) : tuple
        ``truth(taus)`` evaluates the true coefficient functions,
        returning an array of shape (len(taus), p).
    """
    rng = np.random.default_rng(model.seed)
    return _generate(model.kind, model.n, model.params, rng)


def _generate(kind, n, params, rng):
    if kind == "linear14":
        p = {"a0": 1.0, "a1": 2.0, "a2": 1.5, **params}
        x1 = ndtri(np.arange(1, n + 1) / (n + 1))
        X = np.c_[np.ones(n), x1, np.abs(x1)]
        y = X @ np.array([p["a0"], p["a1"], p["a2"]]) + rng.standard_normal(n)

        def truth(taus):
            taus = np.atleast_1d(np.asarray(taus, dtype=float))
            return np.c_[p["a0"] + ndtri(taus),
                         np.full(taus.size, p["a1"]),
                         np.full(taus.size, p["a2"])]

        return Dataset(X, y), truth

    if kind == "qar15":
        def a1(tau):
            return 0.85 + 0.1 * tau + 0.25 * (tau - 0.5) * (tau > 0.5)
    else:
        def a1(tau):
            return 0.85 + 0.1 * tau ** 2 + (tau - 0.5) ** 2 * (tau > 0.5)

    def a0(tau):
        return 0.1 * ndtri(tau)

    def truth(taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        return np.c_[a0(taus), a1(taus)]

    if kind == "qar15":
        total = QAR_BURN_IN + n
        u = rng.uniform(size=total)
        y = np.empty(total + 1)
        y[0] = 0.0
        shocks = a0(u)
        slopes = a1(u)
        for t in range(total):
            y[t + 1] = shocks[t] + slopes[t] * y[t]
        X = np.c_[np.ones(n), y[QAR_BURN_IN:-1]]
        return Dataset(X, y[QAR_BURN_IN + 1:]), truth

    # rancoef17: x independent of the coefficient noise
    u = rng.uniform(size=n)
    x = rng.uniform(0.0, 5.0, size=n)
    y = a0(u) + a1(u) * x
    return Dataset(np.c_[np.ones(n), x], y), truth


def mae(estimates, truth, taus=None) -> float:
    """Mean over levels of the l1 distance between estimate and truth."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if estimates.shape != truth.shape:
        raise DataError(f"shape mismatch: {estimates.shape} vs {truth.shape}")
    if taus is not None and len(np.atleast_1d(taus)) != estimates.shape[0]:
        raise DataError("taus length does not match the estimate rows")
    return float(np.abs(estimates - truth).sum(axis=1).mean())


@dataclass
class McReport:
    model: SimModel
    spar_grid: np.ndarray
    methods: tuple
    runs: int                   # requested replicates
    runs_effective: int         # replicates that completed
    mae_qr: float
    mae_by_spar: dict           # method -> (S,) mean total MAE
    replicate_qr: np.ndarray    # (R_ok,)
    replicate_by_spar: dict     # method -> (R_ok, S)
    subset_mae_by_spar: dict = None
    replicate_subset: dict = None
    point_taus: np.ndarray = None
    point_mae_qr: np.ndarray = None        # (T, p)
    point_mae_by_spar: dict = None         # method -> (S, T, p)
    failures: list = field(default_factory=list)
    seed: int = None


def run_mc(model: SimModel, grid: QuantileGrid, methods=("linear", "cubic"),
           spar_grid=(1.0,), runs: int = 100, seed: int = 0,
           subset_grid: QuantileGrid = None, point_taus=None,
           n_jobs: int = 1) -> McReport:
    """Monte Carlo accuracy experiment.

    Each replicate draws a fresh dataset from an independent substream of
    ``seed``, fits per-level QR plus every (method, spar) combination, and
    records total MAE over the grid levels (and pointwise MAE at
    ``point_taus`` when given; levels outside the grid get their own QR
    fit).  With ``subset_grid``, fits with knots restricted to the subset
    are evaluated on the full grid as well.

    Returns
    -------
    McReport
    """
    if runs < 1:
        raise DataError(f"need runs >= 1, got {runs}")
    spar_grid = np.asarray(spar_grid, dtype=float)
    methods = tuple(methods)
    if subset_grid is not None:
        sub = set(np.round(subset_grid.levels, 12))
        if not sub <= set(np.round(grid.levels, 12)):
            raise DataError("subset_grid levels must be a subset of grid")
    point_taus = (None if point_taus is None
                  else np.atleast_1d(np.asarray(point_taus, dtype=float)))

    children = np.random.SeedSequence(seed).spawn(runs)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_mc_replicate)(model, grid, methods, spar_grid, subset_grid,
                               point_taus, child)
        for child in children)

    good = [r for r in results if not isinstance(r, str)]
    failures = [r for r in results if isinstance(r, str)]
    if not good:
        raise SolverError("every Monte Carlo replicate failed")

    rep_qr = np.array([r["qr"] for r in good])
    rep_by_spar = {m: np.stack([r[m] for r in good]) for m in methods}
    report = McReport(
        model=model, spar_grid=spar_grid, methods=methods, runs=runs,
        runs_effective=len(good), mae_qr=float(rep_qr.mean()),
        mae_by_spar={m: rep_by_spar[m].mean(axis=0) for m in methods},
        replicate_qr=rep_qr, replicate_by_spar=rep_by_spar,
        failures=failures, seed=seed)
    if subset_grid is not None:
        rep_sub = {m: np.stack([r[m + "_subset"] for r in good])
                   for m in methods}
        report.replicate_subset = rep_sub
        report.subset_mae_by_spar = {m: rep_sub[m].mean(axis=0)
                                     for m in methods}
    if point_taus is not None:
        report.point_taus = point_taus
        report.point_mae_qr = np.stack([r["qr_point"] for r in good]
                                       ).mean(axis=0)
        report.point_mae_by_spar = {
            m: np.stack([r[m + "_point"] for r in good]).mean(axis=0)
            for m in methods}
    return report


def _mc_replicate(model, grid, methods, spar_grid, subset_grid, point_taus,
                  seedseq):
    rng = np.random.default_rng(seedseq)
    try:
        data, truth = _generate(model.kind, model.n, model.params, rng)
        truth_grid = truth(grid.levels)
        out = {}
        qr = fit_qr(data, grid)
        out["qr"] = mae(qr.per_level_coefs, truth_grid)
        if point_taus is not None:
            out["qr_point"] = _qr_point_errors(data, grid, qr, truth,
                                               point_taus)
        for method in methods:
            totals = np.empty(spar_grid.size)
            points = (np.empty((spar_grid.size, point_taus.size, data.p))
                      if point_taus is not None else None)
            for si, spar in enumerate(spar_grid):
                fit = fit_sqr(data, grid, method, spar=float(spar))
                totals[si] = mae(fit.coefficients(grid.levels), truth_grid)
                if points is not None:
                    points[si] = np.abs(fit.coefficients(point_taus)
                                        - truth(point_taus))
            out[method] = totals
            if points is not None:
                out[method + "_point"] = points
            if subset_grid is not None:
                sub_totals = np.empty(spar_grid.size)
                for si, spar in enumerate(spar_grid):
                    sf = fit_sqr_subset(data, subset_grid, grid, method,
                                        spar=float(spar))
                    sub_totals[si] = mae(sf.coefs, truth_grid)
                out[method + "_subset"] = sub_totals
        return out
    except (SolverError, DataError) as exc:
        return f"{type(exc).__name__}: {exc}"


def _qr_point_errors(data, grid, qr_fit, truth, point_taus):
    """Pointwise QR errors; levels outside the grid get a direct fit."""
    errs = np.empty((point_taus.size, data.p))
    levels = np.round(grid.levels, 12)
    for ti, tau in enumerate(point_taus):
        hit = np.flatnonzero(np.abs(levels - tau) < 1e-9)
        if hit.size:
            coef = qr_fit.per_level_coefs[hit[0]]
        else:
            coef = lp_ipm.solve_qr(data.X, data.y, float(tau)).theta
        errs[ti] = np.abs(coef - truth([tau])[0])
    return errs
