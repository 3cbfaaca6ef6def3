"""AIC/BIC computation and grid search over the smoothing parameter.

Both criteria combine the mean check loss across levels with a count of
near-interpolated observations as the complexity measure; the smoothing
parameter is chosen by a full grid search (the criteria are not smooth in
``spar``, so a line search can stall in a local minimum).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .assembly import Dataset
from .exceptions import DataError, SolverError
from .fit import SqrFit, check_loss, fit_sqr
from .splines import QuantileGrid

__all__ = ["CriterionCurve", "criterion", "select_spar", "default_spar_grid"]


def default_spar_grid() -> np.ndarray:
    """Grid -1.0, -0.9, ..., 4.0 used when no grid is supplied."""
    return np.round(np.arange(-10, 41) / 10.0, 10)


def default_epsilon(data: Dataset) -> float:
    """Near-zero residual threshold, relative to the response scale."""
    return 1e-6 * max(1.0, float(np.median(np.abs(data.y))))


@dataclass
class CriterionCurve:
    spar_grid: np.ndarray
    aic: np.ndarray
    bic: np.ndarray
    sigma_bar: np.ndarray       # mean check loss per grid point
    m_bar: np.ndarray           # mean near-zero-residual count
    chosen_spar: dict           # criterion name -> argmin spar
    failures: list = field(default_factory=list)

    def best(self, criterion_kind: str = "bic") -> float:
        return self.chosen_spar[criterion_kind]


def criterion(fit: SqrFit, data: Dataset, epsilon: float = None):
    """AIC and BIC of a fitted coefficient path.

    Parameters
    ----------
    fit : SqrFit
    data : Dataset
        The data the fit was computed on.
    epsilon : float, optional
        Threshold below which a residual counts as an interpolated point;
        defaults to 1e-6 * max(1, median |y|).

    Returns
    -------
    (aic, bic) : tuple of floats
    """
    sigma_bar, m_bar = _criterion_components(fit, data, epsilon)
    return _criterion_values(sigma_bar, m_bar, data.n)


def _criterion_components(fit, data, epsilon):
    if epsilon is None:
        epsilon = default_epsilon(data)
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    coefs = fit.coefficients()
    sigma = check_loss(data, fit.grid.levels, coefs) / data.n
    resid = data.y[None, :] - coefs @ data.X.T
    m = (np.abs(resid) < epsilon).sum(axis=1)
    return float(sigma.mean()), float(m.mean())


def _criterion_values(sigma_bar, m_bar, n):
    if sigma_bar <= 0.0:
        raise DataError("mean check loss is zero; criteria are undefined "
                        "(all residuals vanish)")
    fidelity = 2.0 * n * np.log(sigma_bar)
    return (float(fidelity + 2.0 * m_bar),
            float(fidelity + np.log(n) * m_bar))


def _fit_point(data, grid, method, spar, weights, epsilon):
    try:
        fit = fit_sqr(data, grid, method, spar=spar, weights=weights)
    except (SolverError, DataError) as exc:
        return None, str(exc)
    sigma_bar, m_bar = _criterion_components(fit, data, epsilon)
    aic, bic = _criterion_values(sigma_bar, m_bar, data.n)
    return (aic, bic, sigma_bar, m_bar), None


def select_spar(data: Dataset, grid: QuantileGrid, method: str,
                spar_grid=None, criterion_kind: str = "bic",
                epsilon: float = None, weights=None,
                n_jobs: int = 1) -> CriterionCurve:
    """Fit at every spar in the grid and locate the criterion minima.

    Failed grid points are excluded with a warning; ties between equal
    criterion values break toward the larger (smoother) spar.
    """
    if criterion_kind not in ("aic", "bic"):
        raise DataError(f"criterion must be 'aic' or 'bic', "
                        f"got {criterion_kind!r}")
    if spar_grid is None:
        spar_grid = default_spar_grid()
    spar_grid = np.asarray(spar_grid, dtype=float)
    if spar_grid.size == 0 or np.any(np.diff(spar_grid) <= 0):
        raise DataError("spar_grid must be nonempty and sorted increasing")
    if epsilon is None:
        epsilon = default_epsilon(data)

    results = Parallel(n_jobs=n_jobs)(
        delayed(_fit_point)(data, grid, method, float(spar), weights, epsilon)
        for spar in spar_grid)

    S = spar_grid.size
    aic = np.full(S, np.nan)
    bic = np.full(S, np.nan)
    sigma_bar = np.full(S, np.nan)
    m_bar = np.full(S, np.nan)
    failures = []
    for i, (values, err) in enumerate(results):
        if values is None:
            failures.append((float(spar_grid[i]), err))
            warnings.warn(f"spar={spar_grid[i]:g} failed and is excluded: "
                          f"{err}")
            continue
        aic[i], bic[i], sigma_bar[i], m_bar[i] = values
    if np.all(np.isnan(bic)):
        raise SolverError("every spar grid point failed")

    chosen = {"aic": _argmin_prefer_larger(spar_grid, aic),
              "bic": _argmin_prefer_larger(spar_grid, bic)}
    return CriterionCurve(spar_grid=spar_grid, aic=aic, bic=bic,
                          sigma_bar=sigma_bar, m_bar=m_bar,
                          chosen_spar=chosen, failures=failures)


def _argmin_prefer_larger(spar_grid, values) -> float:
    best = None
    best_val = np.inf
    for spar, val in zip(spar_grid, values):
        if np.isnan(val):
            continue
        if val <= best_val:
            best, best_val = float(spar), float(val)
    return best
