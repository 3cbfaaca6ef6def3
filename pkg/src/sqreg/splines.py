"""Spline bases on a quantile grid and the roughness penalty matrix.

The quantile levels double as spline knots.  Two bases are supported:
hat functions (``linear``, dimension L) and cubic B-splines with boundary
knots stacked at the grid ends (``cubic``, dimension L + 2).  Both satisfy
the partition of unity on [a, b].

Evaluation conventions: derivatives are right-continuous at interior knots
and left-continuous at the upper endpoint b, so piecewise-constant
derivatives of linear splines are well defined on all of [a, b].
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .exceptions import DataError

__all__ = [
    "QuantileGrid",
    "SplineBasis",
    "PenaltyMatrix",
    "make_grid",
    "penalty_matrix",
    "delta_phidot",
]


@dataclass(frozen=True)
class QuantileGrid:
    """Ordered quantile levels tau_1 < ... < tau_L inside (0, 1)."""

    levels: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim != 1:
            raise DataError("quantile levels must be a 1-d sequence")
        if levels.size < 3:
            raise DataError(
                f"need at least 3 quantile levels, got {levels.size}"
            )
        if not (np.all(levels > 0.0) and np.all(levels < 1.0)):
            raise DataError("quantile levels must lie strictly inside (0, 1)")
        if not np.all(np.diff(levels) > 0.0):
            raise DataError("quantile levels must be strictly increasing")
        levels.flags.writeable = False
        object.__setattr__(self, "levels", levels)

    @property
    def L(self) -> int:
        return self.levels.size

    @property
    def a(self) -> float:
        return float(self.levels[0])

    @property
    def b(self) -> float:
        return float(self.levels[-1])


def make_grid(a: float, b: float, step: float) -> QuantileGrid:
    """Build the evenly spaced grid {a, a+step, ..., b}.

    Parameters
    ----------
    a, b : float
        Endpoints, 0 < a < b < 1.
    step : float
        Grid spacing; (b - a) / step must be an integer within 1e-9.

    Returns
    -------
    QuantileGrid
    """
    if not (0.0 < a < b < 1.0):
        raise DataError(f"need 0 < a < b < 1, got a={a}, b={b}")
    if step <= 0.0:
        raise DataError(f"step must be positive, got {step}")
    span = (b - a) / step
    nsteps = round(span)
    if nsteps < 1 or abs(span - nsteps) > 1e-9:
        raise DataError(
            f"(b - a) / step = {span} is not an integer within 1e-9"
        )
    return QuantileGrid(np.linspace(a, b, nsteps + 1))


@dataclass(frozen=True)
class SplineBasis:
    """Linear or cubic spline basis with knots at the grid levels.

    ``kind="linear"`` gives hat functions (K = L); ``kind="cubic"`` gives
    cubic B-splines with 4-fold boundary knots (K = L + 2).
    """

    kind: str
    grid: QuantileGrid
    _splines: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("linear", "cubic"):
            raise DataError(f"unknown basis kind {self.kind!r}")
        degree = 1 if self.kind == "linear" else 3
        lv = self.grid.levels
        knots = np.r_[[lv[0]] * (degree + 1), lv[1:-1], [lv[-1]] * (degree + 1)]
        base = BSpline(knots, np.eye(len(knots) - degree - 1), degree,
                       extrapolate=False)
        derivs = [base]
        for _ in range(degree):
            derivs.append(derivs[-1].derivative(1))
        object.__setattr__(self, "_splines", tuple(derivs))

    @property
    def K(self) -> int:
        return self.grid.L if self.kind == "linear" else self.grid.L + 2

    @property
    def degree(self) -> int:
        return 1 if self.kind == "linear" else 3

    def evaluate(self, tau, order: int = 0) -> np.ndarray:
        """Evaluate basis values phi(tau) or a derivative thereof.

        Parameters
        ----------
        tau : float or array-like
            Points in [a, b].
        order : {0, 1, 2}
            Derivative order.  Order 2 of a linear basis is the zero
            vector by convention (slope jumps live in `delta_phidot`).

        Returns
        -------
        ndarray
            Shape (K,) for scalar ``tau``, else (len(tau), K).
        """
        if order not in (0, 1, 2):
            raise DataError(f"derivative order must be 0, 1 or 2, got {order}")
        tau_arr = np.asarray(tau, dtype=float)
        scalar = tau_arr.ndim == 0
        tau_arr = np.atleast_1d(tau_arr)
        lo, hi = self.grid.a, self.grid.b
        if np.any(tau_arr < lo) or np.any(tau_arr > hi):
            raise DataError(
                f"tau outside the basis interval [{lo}, {hi}]"
            )
        if self.kind == "linear" and order == 2:
            out = np.zeros((tau_arr.size, self.K))
        else:
            out = self._splines[order](tau_arr)
            # BSpline yields NaN only for out-of-interval points, which were
            # rejected above; guard against rounding at the endpoints.
            np.nan_to_num(out, copy=False)
        return out[0] if scalar else out

    def knot_values(self, order: int = 0) -> np.ndarray:
        """Basis (or derivative) values at all knots, shape (L, K)."""
        return self.evaluate(self.grid.levels, order=order)


@dataclass(frozen=True)
class PenaltyMatrix:
    """Curvature penalty 2 * sum_l c_l * phidd(tau_l) phidd(tau_l)^T.

    Block-diagonal over the p coefficient functions with identical K-by-K
    blocks; ``c_per_knot`` holds c_l = n * c * w_l.  The quadratic form is
    evaluated through the factored representation (curvatures first, then
    squares), which keeps it exact on paths the penalty annihilates.
    """

    block: np.ndarray
    p: int
    c_per_knot: np.ndarray
    phidd: np.ndarray           # (L, K) second-derivative rows

    @property
    def K(self) -> int:
        return self.block.shape[0]

    def full(self) -> np.ndarray:
        """Dense pK-by-pK matrix I_p (x) block."""
        return np.kron(np.eye(self.p), self.block)

    def quad(self, theta: np.ndarray) -> float:
        """theta^T Omega theta via the factored form."""
        tm = np.asarray(theta, dtype=float).reshape(self.p, self.K)
        curv = self.phidd @ tm.T                 # (L, p)
        return float(2.0 * self.c_per_knot @ (curv ** 2).sum(axis=1))

    def matvec(self, theta: np.ndarray) -> np.ndarray:
        tm = np.asarray(theta, dtype=float).reshape(self.p, self.K)
        curv = self.phidd @ tm.T                 # (L, p)
        out = (2.0 * self.c_per_knot[:, None] * curv).T @ self.phidd
        return out.ravel()


def penalty_matrix(basis: SplineBasis, p: int, c: float,
                   weights=None, n: int = 1) -> PenaltyMatrix:
    """Assemble the discrete curvature penalty for a cubic basis.

    Parameters
    ----------
    basis : SplineBasis
        Must be cubic.
    p : int
        Number of regression coefficients.
    c : float
        Smoothing scalar, c >= 0.
    weights : array-like, optional
        Per-knot weights w_l >= 0, length L.  Defaults to all ones.
    n : int
        Sample size entering c_l = n * c * w_l.

    Returns
    -------
    PenaltyMatrix
    """
    if basis.kind != "cubic":
        raise DataError("the curvature penalty matrix requires a cubic basis")
    if c < 0.0:
        raise DataError(f"smoothing parameter c must be >= 0, got {c}")
    w = _check_weights(weights, basis.grid.L)
    c_per_knot = n * c * w
    phidd = basis.knot_values(order=2)  # (L, K)
    block = 2.0 * np.einsum("l,lk,lm->km", c_per_knot, phidd, phidd)
    block = 0.5 * (block + block.T)
    return PenaltyMatrix(block=block, p=p, c_per_knot=c_per_knot,
                         phidd=phidd)


def delta_phidot(basis: SplineBasis) -> np.ndarray:
    """Slope-change rows d_l = phidot(tau_{l+1}) - phidot(tau_l), l=1..L-1.

    Returns the (L-1, K) array of row differences; the full block
    DeltaPhidot(tau_l) is I_p (x) d_l^T.  The last row is identically zero
    because the derivative at b is taken left-continuously.
    """
    if basis.kind != "linear":
        raise DataError("slope-change blocks are defined for the linear basis")
    phid = basis.knot_values(order=1)  # (L, K)
    return np.diff(phid, axis=0)


def _check_weights(weights, L: int) -> np.ndarray:
    if weights is None:
        return np.ones(L)
    w = np.asarray(weights, dtype=float)
    if w.shape != (L,):
        raise DataError(f"weights must have length {L}, got shape {w.shape}")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise DataError("weights must be finite and >= 0")
    return w
