"""Primal-dual interior-point solver for box-constrained dual LPs.

Solves max { b^T zeta | C^T zeta = a, zeta in [0,1]^m } with a Mehrotra
predictor-corrector on the log-barrier KKT system, returning both the dual
vector zeta and the multiplier theta of the equality constraints.  Theta
solves the companion primal min_theta a^T theta + 1^T (b - C theta)_+, and
the reported duality gap is the difference of those two objective values.

Ordinary quantile regression is the special case C = X, a = (1-tau) X^T 1,
b = y, where theta is the vector of regression quantile coefficients.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._design import as_design
from ._linalg import EquilibratedCholesky
from .exceptions import RankDeficiencyError, SolverError

__all__ = ["SolverReport", "LpSolution", "solve_bounded_dual", "default_init",
           "solve_qr"]

#: fraction of the distance to the boundary taken each step
STEP_DAMPING = 0.99995


@dataclass
class SolverReport:
    status: str                 # "optimal" | "max_iter" | "numerical_failure"
    iterations: int
    gap: float                  # relative duality gap
    primal_residual: float      # scaled equality-constraint residual
    dual_residual: float        # scaled dual-feasibility residual


@dataclass
class LpSolution:
    theta: np.ndarray
    zeta: np.ndarray
    report: SolverReport
    objective: float = float("nan")     # optimal value b^T zeta


def default_init(levels, n: int, p: int) -> np.ndarray:
    """Stacked starting point [(1-tau_1) 1_n, ..., (1-tau_L) 1_n, 0.5 1].

    The trailing block has length p(L-1) and is empty for a single level
    (ordinary quantile regression).
    """
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    L = levels.size
    head = np.repeat(1.0 - levels, n)
    tail = np.full(p * (L - 1), 0.5)
    return np.concatenate([head, tail])


def _chol_with_rank_check(M, first_iteration):
    """Factor the normal matrix; flag rank deficiency on the first call."""
    try:
        cho = EquilibratedCholesky(M)
    except sla.LinAlgError:
        if first_iteration:
            raise RankDeficiencyError(
                "constraint matrix is rank deficient (normal matrix is "
                "not positive definite)"
            ) from None
        # Late-stage breakdown: retry once with a tiny diagonal lift.
        lift = 1e-14 * np.trace(M) / M.shape[0] + 1e-300
        try:
            cho = EquilibratedCholesky(M + lift * np.eye(M.shape[0]))
        except sla.LinAlgError:
            raise SolverError(
                "KKT normal matrix could not be factorized") from None
    if first_iteration and cho.pivot_ratio() <= 1e-10:
        raise RankDeficiencyError(
            "constraint matrix is numerically rank deficient "
            f"(pivot ratio {cho.pivot_ratio():.2e})"
        )
    return cho


def solve_bounded_dual(C, a, b_obj, init_zeta=None, tol: float = 1e-8,
                       max_iter: int = 100) -> LpSolution:
    """Solve max { b^T zeta | C^T zeta = a, zeta in [0,1]^m }.

    Parameters
    ----------
    C : array, sparse matrix, or design operator
        m-by-q constraint matrix with full column rank.
    a : ndarray, shape (q,)
    b_obj : ndarray, shape (m,)
    init_zeta : ndarray, optional
        Starting point strictly inside (0,1)^m; defaults to 0.5.
    tol : float
        Relative duality-gap and feasibility tolerance.
    max_iter : int

    Returns
    -------
    LpSolution
        With ``theta`` the equality multiplier (the regression coefficients)
        and ``zeta`` the box-feasible dual vector.
    """
    design = as_design(C)
    m, q = design.m, design.q
    a = np.asarray(a, dtype=float).ravel()
    b_obj = np.asarray(b_obj, dtype=float).ravel()
    if a.shape != (q,) or b_obj.shape != (m,):
        raise ValueError("a and b_obj do not match the constraint matrix")
    if init_zeta is None:
        x = np.full(m, 0.5)
    else:
        x = np.array(init_zeta, dtype=float).ravel()
        if x.shape != (m,):
            raise ValueError("init_zeta has the wrong length")
        if np.any(x <= 0.0) or np.any(x >= 1.0):
            raise ValueError("init_zeta must lie strictly inside (0,1)^m")

    # Standard-form data: min c^T x, A x = a, 0 <= x <= 1 with A = C^T.
    c_obj = -b_obj
    s = 1.0 - x

    # Initial multipliers from a least-squares fit of the dual constraint.
    M0 = design.normal(np.ones(m))
    cho = _chol_with_rank_check(M0, first_iteration=True)
    y = cho.solve(design.rmatvec(c_obj))
    r = c_obj - design.matvec(y)
    shift = 0.1 * max(1.0, float(np.abs(r).mean()))
    z = np.maximum(r, 0.0) + shift
    w = np.maximum(-r, 0.0) + shift

    a_scale = 1.0 + np.abs(a).max(initial=0.0)
    b_scale = 1.0 + np.abs(b_obj).max(initial=0.0)
    report = SolverReport("max_iter", 0, np.inf, np.inf, np.inf)

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return _iterate(design, a, b_obj, c_obj, x, s, y, z, w, tol,
                        max_iter, a_scale, b_scale, report)


def _iterate(design, a, b_obj, c_obj, x, s, y, z, w, tol, max_iter,
             a_scale, b_scale, report):
    m = design.m
    for it in range(1, max_iter + 1):
        Aty = design.matvec(y)
        rp_vec = a - design.rmatvec(x)
        rd_vec = c_obj - Aty - z + w

        theta = -y
        primal_val = a @ theta + np.maximum(b_obj + Aty, 0.0).sum()
        dual_val = b_obj @ x
        relgap = abs(primal_val - dual_val) / (1.0 + abs(dual_val))
        rp = np.abs(rp_vec).max(initial=0.0) / a_scale
        rd = np.abs(rd_vec).max(initial=0.0) / b_scale
        report = SolverReport("max_iter", it - 1, float(relgap), float(rp),
                              float(rd))
        if relgap <= tol and rp <= tol and rd <= tol:
            report.status = "optimal"
            break

        mu = (x @ z + s @ w) / (2 * m)
        if not np.isfinite(mu):
            report.status = "numerical_failure"
            raise SolverError("interior-point iterates diverged",
                              report=report)
        Q = 1.0 / (z / x + w / s)
        M = design.normal(Q)
        cho = _chol_with_rank_check(M, first_iteration=False)

        def newton_step(rho):
            dy = cho.solve(rp_vec + design.rmatvec(Q * rho))
            dx = Q * (design.matvec(dy) - rho)
            return dy, dx

        # Predictor: pure Newton step on the affine system.
        rho_aff = rd_vec + z - w
        dy_a, dx_a = newton_step(rho_aff)
        dz_a = (-x * z - z * dx_a) / x
        dw_a = (-s * w + w * dx_a) / s
        ap_a = _step_length(x, s, dx_a)
        ad_a = _step_length_dual(z, w, dz_a, dw_a)
        mu_aff = ((x + ap_a * dx_a) @ (z + ad_a * dz_a)
                  + (s - ap_a * dx_a) @ (w + ad_a * dw_a)) / (2 * m)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # Corrector with centering and second-order terms.
        r_xz = sigma * mu - x * z - dx_a * dz_a
        r_sw = sigma * mu - s * w + dx_a * dw_a
        rho = rd_vec - r_xz / x + r_sw / s
        dy, dx = newton_step(rho)
        dz = (r_xz - z * dx) / x
        dw = (r_sw + w * dx) / s

        alpha_p = STEP_DAMPING * _step_length(x, s, dx)
        alpha_d = STEP_DAMPING * _step_length_dual(z, w, dz, dw)
        if max(alpha_p, alpha_d) < 1e-12:
            report.status = "numerical_failure"
            raise SolverError("interior-point step collapsed", report=report)

        x = x + min(alpha_p, 1.0) * dx
        s = 1.0 - x
        y = y + min(alpha_d, 1.0) * dy
        z = z + min(alpha_d, 1.0) * dz
        w = w + min(alpha_d, 1.0) * dw
        report.iterations = it

    return LpSolution(theta=-y, zeta=x, report=report,
                      objective=float(b_obj @ x))


def _step_length(x, s, dx):
    """Largest alpha in (0, 1] keeping x + alpha dx in (0, 1)."""
    alpha = 1.0
    neg = dx < 0
    if np.any(neg):
        alpha = min(alpha, float((-x[neg] / dx[neg]).min()))
    pos = dx > 0
    if np.any(pos):
        alpha = min(alpha, float((s[pos] / dx[pos]).min()))
    return alpha


def _step_length_dual(z, w, dz, dw):
    alpha = 1.0
    neg = dz < 0
    if np.any(neg):
        alpha = min(alpha, float((-z[neg] / dz[neg]).min()))
    neg = dw < 0
    if np.any(neg):
        alpha = min(alpha, float((-w[neg] / dw[neg]).min()))
    return alpha


def solve_qr(X, y, tau: float, tol: float = 1e-8, max_iter: int = 100,
             polish: bool = True) -> LpSolution:
    """Ordinary quantile regression at a single level.

    Runs the bounded-dual solver with C = X, a = (1-tau) X^T 1, b = y,
    then (optionally) polishes the solution onto the exactly-fit
    observations when that is optimal, so basic solutions such as sample
    quantiles are recovered to machine precision.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0,1), got {tau}")
    a = (1.0 - tau) * (X.T @ np.ones(n))
    init = default_init([tau], n, p)
    sol = solve_bounded_dual(X, a, y, init_zeta=init, tol=tol,
                             max_iter=max_iter)
    if polish and sol.report.status == "optimal":
        _polish_qr(sol, X, y, tau)
    return sol


def _check_objective(X, y, tau, theta):
    r = y - X @ theta
    return float(r @ (tau - (r < 0)))


def _polish_qr(sol, X, y, tau):
    """Snap theta onto the p smallest-residual observations if optimal."""
    n, p = X.shape
    r = y - X @ sol.theta
    basic = np.argsort(np.abs(r))[:p]
    XE = X[basic]
    try:
        theta = np.linalg.solve(XE, y[basic])
    except np.linalg.LinAlgError:
        return
    r_new = y - X @ theta
    r_new[basic] = 0.0
    # Subgradient condition: the free part of the gradient must be
    # absorbable by weights in [tau-1, tau] on the exactly-fit points.
    rest = np.ones(n, dtype=bool)
    rest[basic] = False
    grad_rest = (tau - (r_new[rest] < 0)) @ X[rest]
    try:
        g = np.linalg.solve(XE.T, -grad_rest)
    except np.linalg.LinAlgError:
        return
    slack = 1e-9
    if np.any(g < tau - 1.0 - slack) or np.any(g > tau + slack):
        return
    old = _check_objective(X, y, tau, sol.theta)
    new = _check_objective(X, y, tau, theta)
    if new > old + 1e-12 * (1.0 + abs(old)):
        return
    zeta = np.where(r_new > 0, 1.0, 0.0)
    zeta[basic] = np.clip(g + 1.0 - tau, 0.0, 1.0)
    sol.theta = theta
    sol.zeta = zeta
    sol.objective = float(y @ zeta)
