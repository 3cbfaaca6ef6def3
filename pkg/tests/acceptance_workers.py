"""Replicate workers for the acceptance suite (importable for joblib)."""

import numpy as np

from sqreg.exceptions import DataError, SolverError
from sqreg.fit import fit_qr, fit_sqr
from sqreg.lp_ipm import solve_qr
from sqreg.selection import (_criterion_components, _criterion_values,
                             default_epsilon)
from sqreg.simlab import _generate, mae
from sqreg.splines import make_grid

QAR_GRID = make_grid(0.05, 0.95, 0.02)


def qar_qr_point_half(seedseq):
    """|a0_hat(0.5)|, |a1_hat(0.5) - 0.9| for one QAR replicate."""
    rng = np.random.default_rng(seedseq)
    data, _ = _generate("qar15", 200, {}, rng)
    theta = solve_qr(data.X, data.y, 0.5).theta
    return np.abs(theta - np.array([0.0, 0.9]))


def qar_cubic_point_half(seedseq, spar=2.3):
    """Cubic-method error at tau = 0.5 for one QAR replicate."""
    rng = np.random.default_rng(seedseq)
    data, _ = _generate("qar15", 200, {}, rng)
    fit = fit_sqr(data, QAR_GRID, "cubic", spar=spar)
    return np.abs(fit.coefficients([0.5])[0] - np.array([0.0, 0.9]))


def qar_bic_selected_mae(seedseq, spar_grid):
    """(qr_mae, linear_bic_mae, cubic_bic_mae) for one QAR replicate."""
    rng = np.random.default_rng(seedseq)
    try:
        data, truth = _generate("qar15", 200, {}, rng)
        tg = truth(QAR_GRID.levels)
        qr = fit_qr(data, QAR_GRID)
        out = [mae(qr.per_level_coefs, tg)]
        eps = default_epsilon(data)
        for method in ("linear", "cubic"):
            best_bic, best_fit = np.inf, None
            for spar in spar_grid:
                try:
                    f = fit_sqr(data, QAR_GRID, method, spar=float(spar))
                except (SolverError, DataError):
                    continue
                sb, mb = _criterion_components(f, data, eps)
                _, bic = _criterion_values(sb, mb, data.n)
                if bic <= best_bic:
                    best_bic, best_fit = bic, f
            out.append(mae(best_fit.coefficients(QAR_GRID.levels), tg))
        return np.array(out)
    except (SolverError, DataError):
        return None


def random_lp_kkt_measures(seedseq):
    """Externally recomputed gap/residuals for one random LP solve."""
    from sqreg.assembly import Dataset, build_lp
    from sqreg.lp_ipm import default_init, solve_bounded_dual

    rng = np.random.default_rng(seedseq)
    n = int(rng.integers(5, 25))
    p = int(rng.integers(1, 3))
    X = np.c_[np.ones(n), rng.standard_normal((n, p - 1))] if p > 1 \
        else rng.standard_normal((n, 1))
    y = rng.standard_normal(n)
    L = int(rng.integers(3, 8))
    levels = np.linspace(rng.uniform(0.05, 0.2), rng.uniform(0.8, 0.95), L)
    from sqreg.splines import QuantileGrid, SplineBasis
    grid = QuantileGrid(levels)
    prob = build_lp(Dataset(X, y), SplineBasis("linear", grid),
                    c=float(rng.uniform(0.0, 1.0)))
    init = default_init(grid.levels, n, p)
    sol = solve_bounded_dual(prob.design, prob.a, prob.b, init_zeta=init)
    if sol.report.status != "optimal":
        return np.array([np.inf, np.inf, np.inf])
    primal = (prob.a @ sol.theta
              + np.maximum(prob.b - prob.C @ sol.theta, 0.0).sum())
    dual = prob.b @ sol.zeta
    gap = abs(primal - dual) / (1.0 + abs(dual))
    eq = np.abs(prob.C.T @ sol.zeta - prob.a).max() / (
        1.0 + np.abs(prob.a).max())
    box = max(-sol.zeta.min(), sol.zeta.max() - 1.0, 0.0)
    return np.array([gap, eq, box])


def random_qp_kkt_measures(seedseq):
    """Externally recomputed gap/residuals for one random QP solve."""
    from sqreg.assembly import Dataset, build_qp
    from sqreg.qp_ipm import solve_qp
    from sqreg.splines import QuantileGrid, SplineBasis

    rng = np.random.default_rng(seedseq)
    n = int(rng.integers(5, 25))
    p = int(rng.integers(1, 3))
    X = np.c_[np.ones(n), rng.standard_normal((n, p - 1))] if p > 1 \
        else rng.standard_normal((n, 1))
    y = rng.standard_normal(n)
    L = int(rng.integers(3, 8))
    levels = np.linspace(rng.uniform(0.05, 0.2), rng.uniform(0.8, 0.95), L)
    grid = QuantileGrid(levels)
    prob = build_qp(Dataset(X, y), SplineBasis("cubic", grid),
                    c=float(rng.uniform(0.0, 1.0)))
    sol = solve_qp(prob)
    if sol.report.status != "optimal":
        return np.array([np.inf, np.inf, np.inf])
    pen = 0.5 * prob.omega.quad(sol.theta)
    pobj = prob.c_vec @ sol.u + (1 - prob.c_vec) @ sol.v + pen
    dobj = -prob.b @ sol.zeta + pen
    gap = abs(pobj + dobj + (1 - prob.c_vec) @ prob.b) / (1.0 + abs(pobj))
    eq = np.abs(prob.D @ sol.theta + sol.u - sol.v - prob.b).max() / (
        1.0 + np.abs(prob.b).max())
    stat = np.abs(prob.D.T @ sol.lam
                  - prob.omega.matvec(sol.theta)).max() / (1.0 + abs(pobj))
    return np.array([gap, eq, stat])
