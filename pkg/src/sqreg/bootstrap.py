"""Pointwise bootstrap confidence bands for coefficients and derivatives.

Two resampling schemes: independent (x, y)-pair draws, and moving blocks
of consecutive rows for serially dependent data (block length 1 reduces to
the pair scheme, index for index).  Band limits are order-statistic
(inverse-ECDF) percentiles of the replicate estimates, so results are
bit-reproducible for a fixed seed regardless of parallel schedule.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from . import assembly
from .assembly import Dataset
from .exceptions import DataError, SolverError
from .fit import fit_sqr
from .splines import QuantileGrid, SplineBasis

__all__ = ["Band", "resample", "band"]


@dataclass
class Band:
    taus: np.ndarray
    lower: np.ndarray           # len(taus) x p
    upper: np.ndarray
    level: float
    B: int                      # successful replicates
    block_len: int
    target: str                 # "coef" | "deriv"
    n_failed: int = 0


def resample(data: Dataset, scheme: str = "pairs", block_len: int = 1,
             seed=None) -> Dataset:
    """Draw one bootstrap sample of the data rows.

    ``scheme="pairs"`` draws n rows with replacement; ``scheme="blocks"``
    concatenates ceil(n / block_len) blocks of consecutive rows with
    uniformly random starts and truncates to n rows.
    """
    idx = _resample_indices(data.n, scheme, block_len,
                            np.random.default_rng(seed))
    return Dataset(data.X[idx], data.y[idx])


def _resample_indices(n, scheme, block_len, rng):
    if n == 0:
        raise DataError("cannot resample an empty dataset")
    if scheme == "pairs":
        block_len = 1
    elif scheme != "blocks":
        raise DataError(f"unknown resampling scheme {scheme!r}")
    block_len = int(block_len)
    if not 1 <= block_len <= n:
        raise DataError(f"block length must be in [1, {n}], got {block_len}")
    nblocks = -(-n // block_len)
    starts = rng.integers(0, n - block_len + 1, size=nblocks)
    idx = (starts[:, None] + np.arange(block_len)[None, :]).ravel()
    return idx[:n]


def band(data: Dataset, grid: QuantileGrid, fit_config: dict, B: int = 1000,
         scheme: str = "pairs", block_len: int = 10, level: float = 0.90,
         target: str = "coef", seed=None, taus=None,
         n_jobs: int = 1) -> Band:
    """Bootstrap a pointwise confidence band.

    Parameters
    ----------
    data : Dataset
    grid : QuantileGrid
        Knots of the spline fits.
    fit_config : dict
        Keyword arguments for :func:`sqreg.fit.fit_sqr` (``method`` plus
        ``spar`` or ``c``, optional ``weights``).  A ``spar`` value is
        converted to the smoothing scalar c once, on the original data,
        so every replicate is smoothed by the same amount.
    B : int
        Number of bootstrap replicates (>= 2).
    scheme : {"pairs", "blocks"}
    block_len : int
        Block length for the block scheme.
    level : float
        Nominal coverage in (0, 1); the limits are the (1-level)/2 and
        1-(1-level)/2 empirical quantiles across replicates.
    target : {"coef", "deriv"}
        Band for the coefficients or for their tau-derivatives.
    seed : int, optional
        Replicate b draws from an independent substream derived from
        (seed, b), so serial and parallel runs agree bit for bit.
    taus : array-like, optional
        Evaluation levels; defaults to the grid levels.

    Returns
    -------
    Band
    """
    if B < 2:
        raise DataError(f"need at least 2 bootstrap replicates, got {B}")
    if not 0.0 < level < 1.0:
        raise DataError(f"level must be in (0,1), got {level}")
    if target not in ("coef", "deriv"):
        raise DataError(f"unknown band target {target!r}")
    config = dict(fit_config)
    method = config.pop("method")
    weights = config.pop("weights", None)
    spar = config.pop("spar", None)
    c = config.pop("c", None)
    if config:
        raise DataError(f"unknown fit_config entries: {sorted(config)}")
    if spar is not None:
        if c is not None:
            raise DataError("give exactly one of spar or c in fit_config")
        from .fit import _spline_kind
        basis = SplineBasis(_spline_kind(method), grid)
        c = assembly.spar_to_c(spar, data, basis, weights=weights)
    taus = grid.levels if taus is None else np.atleast_1d(
        np.asarray(taus, dtype=float))

    children = np.random.SeedSequence(seed).spawn(B)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_replicate)(data, grid, method, c, weights, scheme,
                            block_len, target, taus, child)
        for child in children)

    good = [r for r in results if r is not None]
    n_failed = B - len(good)
    if n_failed > 0.10 * B:
        raise SolverError(f"{n_failed} of {B} bootstrap replicates failed")
    if n_failed:
        warnings.warn(f"{n_failed} of {B} bootstrap replicates failed and "
                      "were dropped")
    stack = np.stack(good)                       # (B_ok, len(taus), p)
    alpha = 0.5 * (1.0 - level)
    lower = np.quantile(stack, alpha, axis=0, method="inverted_cdf")
    upper = np.quantile(stack, 1.0 - alpha, axis=0, method="inverted_cdf")
    return Band(taus=taus, lower=lower, upper=upper, level=level,
                B=len(good), block_len=block_len if scheme == "blocks" else 1,
                target=target, n_failed=n_failed)


def _replicate(data, grid, method, c, weights, scheme, block_len, target,
               taus, seedseq):
    rng = np.random.default_rng(seedseq)
    idx = _resample_indices(data.n, scheme, block_len, rng)
    try:
        boot = Dataset(data.X[idx], data.y[idx])
        fit = fit_sqr(boot, grid, method, c=c, weights=weights)
    except (SolverError, DataError):
        return None
    if target == "coef":
        return fit.coefficients(taus)
    return fit.derivatives(taus)
