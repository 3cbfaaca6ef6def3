"""High-level estimation API.

Ordinary quantile regression across a grid, the spline-smoothed variants
(linear method via the LP solver, cubic via the QP solver), coefficient
and derivative evaluation anywhere in [a, b], conditional quantile and
quantile-density prediction, and the fit-on-a-subset-then-interpolate
protocol.
"""

from dataclasses import dataclass, field

import numpy as np

from . import assembly, lp_ipm, qp_ipm
from .assembly import Dataset
from .exceptions import DataError, SolverError
from .lp_ipm import SolverReport
from .splines import QuantileGrid, SplineBasis

__all__ = [
    "SqrFit",
    "SubsetFit",
    "fit_qr",
    "fit_sqr",
    "fit_sqr_subset",
    "eval_coef",
    "eval_deriv",
    "predict_quantile",
    "predict_density_recip",
    "check_loss",
    "penalized_objective",
    "interpolate_knot_values",
]



@dataclass
class SqrFit:
    """A fitted quantile-regression coefficient path.

    For the spline methods ``theta`` holds the stacked basis coefficients
    and beta(tau) = Phi(tau) theta is defined on all of [a, b]; for plain
    per-level QR only ``per_level_coefs`` (L-by-p) is available.
    """

    method: str
    grid: QuantileGrid
    basis: SplineBasis = None
    theta: np.ndarray = None
    per_level_coefs: np.ndarray = None
    spar: float = None
    c: float = None
    weights: np.ndarray = None
    report: SolverReport = None
    colnames: list = field(default_factory=list)

    @property
    def p(self) -> int:
        if self.method == "qr":
            return self.per_level_coefs.shape[1]
        return self.theta.size // self.basis.K

    def coefficients(self, taus=None) -> np.ndarray:
        """Coefficient matrix beta(tau), one row per requested level."""
        if self.method == "qr":
            if taus is not None and not np.array_equal(
                    np.atleast_1d(taus), self.grid.levels):
                raise DataError(
                    "a per-level QR fit has no off-knot evaluation")
            return self.per_level_coefs
        if taus is None:
            taus = self.grid.levels
        phi = self.basis.evaluate(np.atleast_1d(taus), order=0)
        return phi @ self.theta.reshape(self.p, self.basis.K).T

    def derivatives(self, taus=None) -> np.ndarray:
        """Derivative matrix betadot(tau), one row per requested level."""
        if self.method == "qr":
            raise DataError("a per-level QR fit has no derivatives")
        if taus is None:
            taus = self.grid.levels
        phid = self.basis.evaluate(np.atleast_1d(taus), order=1)
        return phid @ self.theta.reshape(self.p, self.basis.K).T


@dataclass
class SubsetFit:
    """A spline fit on a knot subset, evaluated on the full grid."""

    fit: SqrFit
    eval_levels: np.ndarray
    coefs: np.ndarray           # len(eval_levels) x p


def fit_qr(data: Dataset, grid: QuantileGrid, tol: float = 1e-8,
           max_iter: int = 100, colnames=None) -> SqrFit:
    """Ordinary quantile regression solved independently at each level."""
    coefs = np.empty((grid.L, data.p))
    worst = SolverReport("optimal", 0, 0.0, 0.0, 0.0)
    for l, tau in enumerate(grid.levels):
        try:
            sol = lp_ipm.solve_qr(data.X, data.y, float(tau), tol=tol,
                                  max_iter=max_iter)
        except SolverError as exc:
            raise type(exc)(
                f"QR fit failed at level {l} (tau={tau:g}): {exc}",
                report=getattr(exc, "report", None)) from exc
        if sol.report.status != "optimal":
            raise SolverError(
                f"QR fit did not converge at level {l} (tau={tau:g})",
                report=sol.report)
        coefs[l] = sol.theta
        worst = _worse_report(worst, sol.report)
    return SqrFit(method="qr", grid=grid, per_level_coefs=coefs,
                  report=worst, colnames=_names(colnames, data.p))


def fit_sqr(data: Dataset, grid: QuantileGrid, method: str,
            spar: float = None, c: float = None, weights=None,
            tol: float = 1e-8, max_iter: int = None,
            colnames=None) -> SqrFit:
    """Spline quantile regression with the linear or cubic method.

    Exactly one of ``spar`` (log-scale smoothing parameter, converted via
    c = r * 1000**(spar-1)) or ``c`` (raw smoothing scalar) must be given.

    Returns
    -------
    SqrFit
    """
    kind = _spline_kind(method)
    if (spar is None) == (c is None):
        raise DataError("give exactly one of spar or c")
    basis = SplineBasis(kind, grid)
    if spar is not None:
        c = assembly.spar_to_c(spar, data, basis, weights=weights)
    if kind == "cubic":
        problem = assembly.build_qp(data, basis, c, weights=weights)
        sol = _solve_cubic(problem, tol, max_iter or 200)
    else:
        problem = assembly.build_lp(data, basis, c, weights=weights)
        sol = _solve_linear(problem, tol, max_iter or 100)
    if sol.report.status != "optimal":
        raise SolverError(f"{method} SQR fit did not converge "
                          f"(status {sol.report.status})", report=sol.report)
    return SqrFit(method=f"sqr_{kind}", grid=grid, basis=basis,
                  theta=np.asarray(sol.theta), spar=spar, c=float(c),
                  weights=problem.weights, report=sol.report,
                  colnames=_names(colnames, data.p))


def fit_sqr_subset(data: Dataset, fit_grid: QuantileGrid,
                   eval_grid: QuantileGrid, method: str, spar: float = None,
                   c: float = None, weights=None, **kwargs) -> SubsetFit:
    """Fit on a knot subset and interpolate to the full evaluation grid.

    ``fit_grid`` levels must form a subset of ``eval_grid`` levels; the
    spline is fitted with knots at ``fit_grid`` and evaluated at every
    level of ``eval_grid``.
    """
    fit_set = set(np.round(fit_grid.levels, 12))
    eval_set = set(np.round(eval_grid.levels, 12))
    if not fit_set <= eval_set:
        raise DataError("fit_grid levels must be a subset of eval_grid")
    fit = fit_sqr(data, fit_grid, method, spar=spar, c=c, weights=weights,
                  **kwargs)
    coefs = fit.coefficients(eval_grid.levels)
    return SubsetFit(fit=fit, eval_levels=eval_grid.levels, coefs=coefs)


def eval_coef(fit: SqrFit, tau: float) -> np.ndarray:
    """beta(tau) as a length-p vector (spline fits only)."""
    if fit.method == "qr":
        raise DataError("a per-level QR fit has no off-knot evaluation")
    return fit.coefficients([float(tau)])[0]


def eval_deriv(fit: SqrFit, tau: float) -> np.ndarray:
    """betadot(tau) as a length-p vector.

    For the linear method this is right-continuous and piecewise constant
    between knots.
    """
    if fit.method == "qr":
        raise DataError("a per-level QR fit has no derivatives")
    return fit.derivatives([float(tau)])[0]


def predict_quantile(fit: SqrFit, x, tau: float) -> float:
    """Conditional quantile x' beta(tau)."""
    x = _check_x(x, fit.p)
    return float(x @ eval_coef(fit, tau))


def predict_density_recip(fit: SqrFit, x, tau: float) -> float:
    """Reciprocal conditional quantile density x' betadot(tau)."""
    x = _check_x(x, fit.p)
    return float(x @ eval_deriv(fit, tau))


def check_loss(data: Dataset, taus, coefs) -> np.ndarray:
    """Per-level check-loss sums for coefficient rows beta(tau_l)."""
    taus = np.atleast_1d(taus)
    coefs = np.atleast_2d(coefs)
    resid = data.y[None, :] - coefs @ data.X.T     # (L, n)
    return np.sum(resid * (taus[:, None] - (resid < 0)), axis=1)


def penalized_objective(data: Dataset, basis: SplineBasis, c: float,
                        theta, weights=None) -> float:
    """Check losses over all levels plus the roughness penalty at theta."""
    theta = np.asarray(theta, dtype=float).ravel()
    p = theta.size // basis.K
    coefs = basis.knot_values(0) @ theta.reshape(p, basis.K).T
    fidelity = float(check_loss(data, basis.grid.levels, coefs).sum())
    if basis.kind == "cubic":
        from .splines import penalty_matrix
        omega = penalty_matrix(basis, p, c, weights=weights, n=data.n)
        return fidelity + 0.5 * omega.quad(theta)
    from .splines import _check_weights, delta_phidot
    w = _check_weights(weights, basis.grid.L)
    Dm = delta_phidot(basis)
    changes = theta.reshape(p, basis.K) @ Dm.T     # (p, L-1)
    c_l = data.n * c * w[:-1]
    return fidelity + float(c_l @ np.abs(changes).sum(axis=0))


def interpolate_knot_values(basis: SplineBasis, values) -> np.ndarray:
    """Basis coefficients of the spline interpolating given knot values.

    ``values`` is (L, p).  The linear basis interpolates uniquely; for the
    cubic basis (K = L + 2) the minimum-curvature interpolant is returned.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    L, p = values.shape
    if L != basis.grid.L:
        raise DataError("values must have one row per knot")
    B = basis.knot_values(0)                       # (L, K)
    if basis.kind == "linear":
        theta = np.linalg.solve(B, values)         # B is the identity here
        return theta.T.ravel()
    phidd = basis.knot_values(2)
    Om0 = phidd.T @ phidd
    K = basis.K
    kkt = np.zeros((K + L, K + L))
    kkt[:K, :K] = Om0
    kkt[:K, K:] = B.T
    kkt[K:, :K] = B
    rhs = np.vstack([np.zeros((K, p)), values])
    theta = np.linalg.solve(kkt, rhs)[:K]
    return theta.T.ravel()


def _solve_linear(problem, tol, max_iter):
    """Direct LP solve with a certified fallback when the penalty rows
    dominate the data rows beyond double-precision reach."""
    if _lp_penalty_ratio(problem) > 1e9:
        sol = _solve_lp_affine_limit(problem, tol=tol, max_iter=max_iter)
        if sol is not None:
            return sol
    grid = problem.basis.grid
    init = lp_ipm.default_init(grid.levels, problem.data.n, problem.data.p)
    try:
        sol = lp_ipm.solve_bounded_dual(problem.design, problem.a, problem.b,
                                        init_zeta=init, tol=tol,
                                        max_iter=max_iter)
        if sol.report.status == "optimal":
            return sol
    except SolverError:
        sol = None
    # The total-variation penalty pins all slope changes to exactly zero
    # beyond a finite threshold; the restricted solve certifies itself.
    limit = _solve_lp_affine_limit(problem, tol=tol, max_iter=max_iter)
    if limit is not None:
        return limit
    if sol is not None:
        return sol
    raise SolverError("linear SQR solve failed in the extreme-smoothing "
                      "regime")


def _solve_cubic(problem, tol, max_iter):
    """Direct QP solve with fallbacks for stiff penalties.

    Once the curvature term is large relative to the data rows, the
    stationarity residual of the plain formulation drowns in
    floating-point cancellation.  An exact orthogonal reparameterization
    diagonalizing the penalty restores computable residuals; beyond that,
    the certified affine-limit construction takes over.
    """
    ratio = _qp_penalty_ratio(problem)
    sol = None
    if ratio <= 1e8:
        try:
            sol = qp_ipm.solve_qp(problem, tol=tol, max_iter=max_iter)
        except SolverError:
            pass
        if sol is not None and sol.report.status == "optimal":
            return sol
    try:
        rot = _solve_cubic_rotated(problem, tol=tol, max_iter=max_iter)
        if rot.report.status == "optimal":
            return rot
        sol = sol if sol is not None else rot
    except SolverError:
        pass
    limit = _solve_qp_smooth_limit(problem, tol=tol, max_iter=max_iter)
    if limit is not None:
        return limit
    if sol is not None:
        return sol
    raise SolverError("cubic SQR solve failed in the stiff-penalty regime")


def _solve_cubic_rotated(problem, tol, max_iter):
    """Solve the QP in coordinates that diagonalize the penalty block."""
    from types import SimpleNamespace

    from ._design import StackedDesign

    design = problem.design
    eigval, Q = np.linalg.eigh(problem.omega.block)
    eigval = np.maximum(eigval, 0.0)
    rot_design = StackedDesign(design.X, design.B @ Q)
    rotated = SimpleNamespace(design=rot_design, b=problem.b,
                              c_vec=problem.c_vec,
                              omega=np.diag(np.tile(eigval, design.p)))
    sol = qp_ipm.solve_qp(rotated, tol=tol, max_iter=max_iter)
    p, K = design.p, design.K
    sol.theta = (sol.theta.reshape(p, K) @ Q.T).ravel()
    return sol


def _lp_penalty_ratio(problem) -> float:
    design = problem.design
    if design.Dm is None or design.c_diff is None:
        return 0.0
    pen = (2.0 * design.c_diff[:, None] * np.abs(design.Dm)).max(initial=0.0)
    return pen / max(np.abs(design.X).max(), 1e-300)


def _qp_penalty_ratio(problem) -> float:
    omega_scale = np.abs(problem.omega.block).max(initial=0.0)
    design = problem.design
    data_scale = problem.data.n * (np.abs(design.X).max()
                                   * np.abs(design.B).max()) ** 2
    return omega_scale / max(data_scale, 1e-300)


def _solve_lp_affine_limit(problem, tol, max_iter):
    """Exact LP solution in the extreme-smoothing regime, or None.

    Solves the problem restricted to coefficient paths affine in tau
    (a stacked quantile regression with basis (1, tau)) and certifies
    optimality for the full LP by completing the dual with box-feasible
    multipliers on the slope-change rows.
    """
    from ._design import StackedDesign

    design = problem.design
    taus = problem.basis.grid.levels
    n, p, L, K = design.n, design.p, design.L, design.K
    B_aff = np.c_[np.ones(L), taus]
    res_design = StackedDesign(design.X, B_aff)
    one_minus = np.repeat(1.0 - taus, n)
    a_res = res_design.rmatvec(one_minus)
    b_res = np.tile(problem.data.y, L)
    try:
        sol = lp_ipm.solve_bounded_dual(res_design, a_res, b_res,
                                        init_zeta=one_minus, tol=tol,
                                        max_iter=max_iter)
    except SolverError:
        return None
    if sol.report.status != "optimal":
        return None

    # Map (alpha_j, gamma_j) to hat-basis coefficients (the knot values).
    ab = sol.theta.reshape(p, 2)
    theta = (ab[:, :1] + ab[:, 1:] * taus[None, :]).ravel()

    # Complete the dual: 2 P^T zeta_p must absorb a - D^T zeta_y.
    rhs = problem.a - _data_rmatvec(design, sol.zeta)
    cols = 2.0 * design.c_diff[:, None] * design.Dm      # (L-1, K)
    zeta_p = np.full((L - 1, p), 0.5)
    ok = True
    for j in range(p):
        rj = rhs[j * K:(j + 1) * K]
        coef, res_sq, _, _ = np.linalg.lstsq(cols.T, rj, rcond=None)
        resid = cols.T @ coef - rj
        if np.abs(resid).max() > 1e-6 * (1.0 + np.abs(problem.a).max()):
            ok = False
            break
        live = np.abs(cols).sum(axis=1) > 0
        if np.any(coef[live] < -1e-7) or np.any(coef[live] > 1.0 + 1e-7):
            ok = False
            break
        zeta_p[live, j] = np.clip(coef[live], 0.0, 1.0)
    if not ok:
        return None
    zeta = np.concatenate([sol.zeta, zeta_p.ravel()])
    objective = float(problem.b @ zeta)
    report = SolverReport("optimal", sol.report.iterations,
                          sol.report.gap, sol.report.primal_residual,
                          sol.report.dual_residual)
    return lp_ipm.LpSolution(theta=theta, zeta=zeta, report=report,
                             objective=objective)


def _data_rmatvec(design, zeta_y):
    """D^T zeta_y for the data block of a penalized stacked design."""
    W = zeta_y.reshape(design.L, design.n)
    return ((W @ design.X).T @ design.B).ravel()


def _solve_qp_smooth_limit(problem, tol, max_iter):
    """Certified QP solution in the stiff-curvature regime, or None.

    Solves the affine-restricted stacked quantile regression, corrects
    theta through the range of the penalty so the stationarity condition
    holds, and accepts the result only if the full KKT measures pass the
    requested tolerance.
    """
    from ._design import StackedDesign

    design = problem.design
    basis = problem.basis
    taus = basis.grid.levels
    n, p, L, K = design.n, design.p, design.L, design.K
    B_aff = np.c_[np.ones(L), taus]
    res_design = StackedDesign(design.X, B_aff)
    one_minus = np.repeat(1.0 - taus, n)
    a_res = res_design.rmatvec(one_minus)
    b = problem.b
    try:
        res = lp_ipm.solve_bounded_dual(res_design, a_res, b,
                                        init_zeta=one_minus, tol=tol,
                                        max_iter=max_iter)
    except SolverError:
        return None
    if res.report.status != "optimal":
        return None

    ab = res.theta.reshape(p, 2)
    knot_vals = ab[:, :1] + ab[:, 1:] * taus[None, :]       # (p, L)
    theta_aff = interpolate_knot_values(basis, knot_vals.T).reshape(p, K)
    zeta = res.zeta
    c_vec = np.repeat(taus, n)
    lam = zeta - (1.0 - c_vec)

    # First-order correction through the penalty's range restores the
    # stationarity condition Omega theta = D^T lambda.  The affine part
    # is annihilated by Omega exactly, so the stationarity residual and
    # the penalty value are evaluated through the correction alone
    # (evaluating Omega theta directly would drown in cancellation).
    g = _data_rmatvec(design, lam).reshape(p, K)
    block = problem.omega.block
    corr = np.empty_like(theta_aff)
    stat_resid = 0.0
    penalty_quad = 0.0
    for j in range(p):
        corr[j], *_ = np.linalg.lstsq(block, g[j], rcond=None)
        stat_resid = max(stat_resid,
                         np.abs(g[j] - block @ corr[j]).max(initial=0.0))
        penalty_quad += float(corr[j] @ block @ corr[j])
    theta = (theta_aff + corr).ravel()

    Dtheta = design.matvec(theta)
    resid = b - Dtheta
    u = np.maximum(resid, 0.0)
    v = np.maximum(-resid, 0.0)
    z_u = c_vec - lam
    z_v = (1.0 - c_vec) + lam

    pobj = c_vec @ u + (1.0 - c_vec) @ v + 0.5 * penalty_quad
    dobj = -b @ zeta + 0.5 * penalty_quad
    gap = abs(pobj + dobj + (1.0 - c_vec) @ b) / (1.0 + abs(pobj))
    rd = max(stat_resid,
             -min(z_u.min(initial=0.0), 0.0),
             -min(z_v.min(initial=0.0), 0.0)) / (1.0 + abs(pobj))
    if gap > tol or rd > tol:
        return None
    report = SolverReport("optimal", res.report.iterations, float(gap),
                          0.0, float(rd))
    return qp_ipm.QpSolution(theta=theta, u=u, v=v, zeta=zeta, lam=lam,
                             report=report, objective=float(pobj))


def _spline_kind(method: str) -> str:
    aliases = {"linear": "linear", "sqr_linear": "linear",
               "cubic": "cubic", "sqr_cubic": "cubic"}
    if method not in aliases:
        raise DataError(f"unknown SQR method {method!r}")
    return aliases[method]


def _names(colnames, p):
    if colnames is None:
        return [f"x{j}" for j in range(p)]
    colnames = list(colnames)
    if len(colnames) != p:
        raise DataError(f"expected {p} column names, got {len(colnames)}")
    return colnames


def _check_x(x, p):
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (p,):
        raise DataError(f"x must have length {p}, got {x.shape}")
    return x


def _worse_report(r1: SolverReport, r2: SolverReport) -> SolverReport:
    status = r1.status if r2.status == "optimal" else r2.status
    return SolverReport(status,
                        max(r1.iterations, r2.iterations),
                        max(r1.gap, r2.gap),
                        max(r1.primal_residual, r2.primal_residual),
                        max(r1.dual_residual, r2.dual_residual))
