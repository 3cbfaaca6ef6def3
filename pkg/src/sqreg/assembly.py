"""Assembly of the stacked optimization problems.

Builds the quadratic program for the cubic method (check losses over all
levels plus a curvature penalty) and the linear program for the linear
method (check losses plus total-variation penalty on the slopes), together
with the ``spar`` reparameterization of the smoothing scalar c.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from ._design import StackedDesign
from .exceptions import DataError
from .splines import PenaltyMatrix, SplineBasis, _check_weights, delta_phidot, penalty_matrix

__all__ = [
    "Dataset",
    "QpProblem",
    "LpProblem",
    "build_qp",
    "build_lp",
    "spar_to_c",
    "smoothing_scale",
]

# Guard against accidentally assembling problems too large for memory.
MAX_STACKED_ROWS = 20_000_000


@dataclass(frozen=True)
class Dataset:
    """Design matrix X (n-by-p) and response y (n)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("X must be a 2-d array")
        n, p = X.shape
        if y.shape != (n,):
            raise DataError(
                f"y has length {y.size}, expected {n} to match X"
            )
        if p < 1 or n < p:
            raise DataError(f"need n >= p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise DataError("X and y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class QpProblem:
    """Cubic-method QP: min c^T u + (1-c)^T v + theta' Omega theta / 2
    subject to D theta + u - v = b, u, v >= 0."""

    D: sps.csr_matrix
    b: np.ndarray
    c_vec: np.ndarray
    omega: PenaltyMatrix
    design: StackedDesign = field(repr=False)
    data: Dataset = field(repr=False)
    basis: SplineBasis = field(repr=False)
    c: float
    weights: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.D.shape[0]

    @property
    def n_coef(self) -> int:
        return self.D.shape[1]

    @property
    def a(self) -> np.ndarray:
        """Right-hand side D' (1 - c) of the companion dual's constraint."""
        return self.design.rmatvec(1.0 - self.c_vec)


@dataclass(frozen=True)
class LpProblem:
    """Linear-method LP data for the bounded dual
    max { b^T zeta | C^T zeta = a, zeta in [0,1]^m }."""

    C: sps.csr_matrix
    a: np.ndarray
    b: np.ndarray
    design: StackedDesign = field(repr=False)
    data: Dataset = field(repr=False)
    basis: SplineBasis = field(repr=False)
    c: float
    weights: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    @property
    def n_coef(self) -> int:
        return self.C.shape[1]


def _check_problem_size(n, L):
    if n * L > MAX_STACKED_ROWS:
        raise DataError(
            f"stacked problem has n*L = {n * L} rows, beyond the configured "
            f"cap of {MAX_STACKED_ROWS}; reduce the grid or sample size"
        )


def _level_blocks(X, basis):
    """Sparse kron(X, phi^T(tau_l)) blocks stacked over levels."""
    B = basis.knot_values(order=0)
    blocks = [sps.kron(sps.csr_matrix(X), sps.csr_matrix(B[l]))
              for l in range(basis.grid.L)]
    return sps.vstack(blocks, format="csr"), B


def build_qp(data: Dataset, basis: SplineBasis, c: float,
             weights=None) -> QpProblem:
    """Assemble the stacked QP for the cubic method.

    Parameters
    ----------
    data : Dataset
    basis : SplineBasis
        Cubic basis on the quantile grid.
    c : float
        Smoothing scalar, c >= 0.
    weights : array-like, optional
        Per-knot penalty weights, length L.

    Returns
    -------
    QpProblem
    """
    if basis.kind != "cubic":
        raise DataError("build_qp requires a cubic basis")
    if c < 0.0:
        raise DataError(f"smoothing parameter c must be >= 0, got {c}")
    n, L = data.n, basis.grid.L
    _check_problem_size(n, L)
    w = _check_weights(weights, L)
    D, B = _level_blocks(data.X, basis)
    taus = basis.grid.levels
    c_vec = np.repeat(taus, n)
    b = np.tile(data.y, L)
    omega = penalty_matrix(basis, data.p, c, weights=w, n=n)
    design = StackedDesign(data.X, B)
    return QpProblem(D=D, b=b, c_vec=c_vec, omega=omega, design=design,
                     data=data, basis=basis, c=float(c), weights=w)


def build_lp(data: Dataset, basis: SplineBasis, c: float,
             weights=None) -> LpProblem:
    """Assemble the bounded-dual LP for the linear method.

    The constraint matrix is C = [D; 2P] with P stacking the weighted
    slope-change blocks, and the right-hand side of the primal is the
    response stacked over the L levels followed by p(L-1) zeros.
    """
    if basis.kind != "linear":
        raise DataError("build_lp requires a linear basis")
    if c < 0.0:
        raise DataError(f"smoothing parameter c must be >= 0, got {c}")
    n, p, L = data.n, data.p, basis.grid.L
    _check_problem_size(n, L)
    w = _check_weights(weights, L)
    D, B = _level_blocks(data.X, basis)
    Dm = delta_phidot(basis)              # (L-1, K) slope-change rows
    c_diff = n * c * w[:-1]               # c_l = n c w_l for l = 1..L-1
    eye_p = sps.eye(p, format="csr")
    P = sps.vstack(
        [c_diff[l] * sps.kron(eye_p, sps.csr_matrix(Dm[l]))
         for l in range(L - 1)],
        format="csr",
    )
    C = sps.vstack([D, 2.0 * P], format="csr")
    taus = basis.grid.levels
    design = StackedDesign(data.X, B, c_diff=c_diff, diff_rows=Dm)
    # a = C^T applied to the stacked vector ((1 - tau_l) per level, 0.5).
    zeta0 = np.concatenate([np.repeat(1.0 - taus, n),
                            np.full(p * (L - 1), 0.5)])
    a = design.rmatvec(zeta0)
    b = np.concatenate([np.tile(data.y, L), np.zeros(p * (L - 1))])
    return LpProblem(C=C, a=a, b=b, design=design, data=data, basis=basis,
                     c=float(c), weights=w)


def smoothing_scale(data: Dataset, basis: SplineBasis, weights=None) -> float:
    """Data-dependent scale factor r in c = r * 1000**(spar - 1).

    The numerator is the mean over levels of the entrywise l1 norm of
    X Phi(tau_l) divided by n; the denominator measures the penalty scale
    (trace of the curvature Gram for the cubic basis, entrywise l1 norm of
    the slope-change blocks for the linear one).
    """
    L = basis.grid.L
    w = _check_weights(weights, L)
    B = basis.knot_values(order=0)
    sum_abs_x = np.abs(data.X).sum()
    numer = sum_abs_x * np.abs(B).sum(axis=1).sum() / data.n
    if basis.kind == "cubic":
        phidd = basis.knot_values(order=2)
        denom = data.p * float(w @ (phidd ** 2).sum(axis=1))
    else:
        Dm = delta_phidot(basis)
        denom = data.p * float(w[:-1] @ np.abs(Dm).sum(axis=1))
    if denom <= 0.0:
        raise DataError("degenerate basis: the penalty scale is zero")
    return float(numer / denom)


def spar_to_c(spar: float, data: Dataset, basis: SplineBasis,
              weights=None) -> float:
    """Convert the log-scale smoothing parameter: c = r * 1000**(spar-1)."""
    if not np.isfinite(spar):
        raise DataError(f"spar must be finite, got {spar}")
    r = smoothing_scale(data, basis, weights=weights)
    return float(r * 1000.0 ** (spar - 1.0))
