"""Primal-dual interior-point solver for the cubic-method QP.

Solves min { c^T u + (1-c)^T v + theta' Omega theta / 2 } subject to
D theta + u - v = b with u, v >= 0 and theta free, via a Mehrotra
predictor-corrector on the KKT system.  The free coefficient vector theta
is carried explicitly through the iterations (Omega is singular, so
recovering theta from the dual alone would not be unique); the companion
dual of the problem serves as the optimality certificate.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._design import as_design
from ._linalg import EquilibratedCholesky
from .exceptions import SolverError
from .lp_ipm import SolverReport

__all__ = ["QpSolution", "solve_qp", "dual_objective"]

#: fraction of the distance to the boundary taken each step (laxer than the
#: LP solver for stability with a singular quadratic term)
STEP_DAMPING = 0.99


@dataclass
class QpSolution:
    theta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    zeta: np.ndarray            # lambda + (1 - c), in [0,1] at optimality
    lam: np.ndarray             # equality multiplier
    report: SolverReport
    objective: float = float("nan")
    regularized: bool = False   # proximal lift was needed at least once


def _omega_full(omega, q):
    if omega is None:
        return np.zeros((q, q))
    if hasattr(omega, "full"):
        return omega.full()
    Om = np.asarray(omega, dtype=float)
    if Om.shape != (q, q):
        raise ValueError(f"omega must be {q}x{q}, got {Om.shape}")
    return Om


def solve_qp(problem, tol: float = 1e-8, max_iter: int = 200) -> QpSolution:
    """Solve an assembled cubic-method QP.

    Parameters
    ----------
    problem : QpProblem
        As built by :func:`sqreg.assembly.build_qp`; any object with
        attributes ``D`` (or ``design``), ``b``, ``c_vec`` and ``omega``
        is accepted.
    tol : float
        Relative tolerance on the duality gap and the KKT residuals.
    max_iter : int

    Returns
    -------
    QpSolution
    """
    design = getattr(problem, "design", None)
    if design is None:
        design = as_design(problem.D)
    b = np.asarray(problem.b, dtype=float).ravel()
    c_vec = np.asarray(problem.c_vec, dtype=float).ravel()
    N, q = design.m, design.q
    if b.shape != (N,) or c_vec.shape != (N,):
        raise ValueError("b and c_vec do not match the design")
    Om = _omega_full(problem.omega, q)

    theta = np.zeros(q)
    shift = 0.5 * (1.0 + float(np.abs(b).mean()))
    u = np.maximum(b, 0.0) + shift
    v = np.maximum(-b, 0.0) + shift
    lam = c_vec - 0.5
    z_u = np.full(N, 0.5)
    z_v = np.full(N, 0.5)

    b_scale = 1.0 + np.abs(b).max(initial=0.0)
    one_minus_c = 1.0 - c_vec
    regularized = False
    report = SolverReport("max_iter", 0, np.inf, np.inf, np.inf)

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return _iterate(design, Om, b, c_vec, one_minus_c, theta, lam,
                        u, v, z_u, z_v, tol, max_iter, b_scale, regularized,
                        report)


def _iterate(design, Om, b, c_vec, one_minus_c, theta, lam, u, v, z_u, z_v,
             tol, max_iter, b_scale, regularized, report):
    N = design.m
    for it in range(1, max_iter + 1):
        Dtheta = design.matvec(theta)
        r_p = b - Dtheta - u + v
        r_theta = design.rmatvec(lam) - Om @ theta
        r_u = c_vec - lam - z_u
        r_v = one_minus_c + lam - z_v

        pobj = c_vec @ u + one_minus_c @ v + 0.5 * (theta @ Om @ theta)
        zeta = lam + one_minus_c
        dobj = -b @ zeta + 0.5 * (theta @ Om @ theta)
        gap = abs(pobj + dobj + one_minus_c @ b) / (1.0 + abs(pobj))
        rp = np.abs(r_p).max(initial=0.0) / b_scale
        rd = max(np.abs(r_theta).max(initial=0.0),
                 np.abs(r_u).max(initial=0.0),
                 np.abs(r_v).max(initial=0.0)) / (1.0 + abs(pobj))
        report = SolverReport("max_iter", it - 1, float(gap), float(rp),
                              float(rd))
        if gap <= tol and rp <= tol and rd <= tol:
            report.status = "optimal"
            break

        mu = (u @ z_u + v @ z_v) / (2 * N)
        if not np.isfinite(mu):
            report.status = "numerical_failure"
            raise SolverError("interior-point iterates diverged",
                              report=report)
        if mu <= 1e-2 * np.finfo(float).eps * (1.0 + abs(pobj)):
            # complementarity is exhausted but the KKT residuals are
            # stuck above tolerance: stagnation, stop burning iterations
            break
        E = u / z_u + v / z_v
        Einv = 1.0 / E
        M = Om + design.normal(Einv)
        cho, lifted = _factor_with_lift(M)
        regularized = regularized or lifted

        def newton_step(g):
            # solve  D dtheta + E dlam = r_p - g,
            #        Om dtheta - D' dlam = r_theta
            # with one round of iterative refinement: recovering dlam
            # through 1/E amplifies solve error on near-active rows.
            rhs1 = r_p - g
            dtheta = cho.solve(r_theta + design.rmatvec(Einv * rhs1))
            dlam = Einv * (rhs1 - design.matvec(dtheta))
            res1 = rhs1 - design.matvec(dtheta) - E * dlam
            res2 = r_theta - Om @ dtheta + design.rmatvec(dlam)
            ctheta = cho.solve(res2 + design.rmatvec(Einv * res1))
            clam = Einv * (res1 - design.matvec(ctheta))
            return dtheta + ctheta, dlam + clam

        # Predictor.
        r_uz = -u * z_u
        r_vz = -v * z_v
        g = (r_uz - u * r_u) / z_u - (r_vz - v * r_v) / z_v
        dth_a, dlam_a = newton_step(g)
        dzu_a = r_u - dlam_a
        dzv_a = r_v + dlam_a
        du_a = (r_uz - u * dzu_a) / z_u
        dv_a = (r_vz - v * dzv_a) / z_v
        alpha_a = min(_pos_step(u, du_a), _pos_step(v, dv_a),
                      _pos_step(z_u, dzu_a), _pos_step(z_v, dzv_a))
        mu_aff = ((u + alpha_a * du_a) @ (z_u + alpha_a * dzu_a)
                  + (v + alpha_a * dv_a) @ (z_v + alpha_a * dzv_a)) / (2 * N)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # Corrector (same factorization).
        r_uz = sigma * mu - u * z_u - du_a * dzu_a
        r_vz = sigma * mu - v * z_v - dv_a * dzv_a
        g = (r_uz - u * r_u) / z_u - (r_vz - v * r_v) / z_v
        dtheta, dlam = newton_step(g)
        dz_u = r_u - dlam
        dz_v = r_v + dlam
        du = (r_uz - u * dz_u) / z_u
        dv = (r_vz - v * dz_v) / z_v

        alpha = STEP_DAMPING * min(_pos_step(u, du), _pos_step(v, dv),
                                   _pos_step(z_u, dz_u), _pos_step(z_v, dz_v))
        if alpha < 1e-12:
            report.status = "numerical_failure"
            raise SolverError("interior-point step collapsed", report=report)
        alpha = min(alpha, 1.0)

        theta = theta + alpha * dtheta
        lam = lam + alpha * dlam
        u = u + alpha * du
        v = v + alpha * dv
        z_u = z_u + alpha * dz_u
        z_v = z_v + alpha * dz_v
        report.iterations = it

    zeta = lam + one_minus_c
    pobj = c_vec @ u + one_minus_c @ v + 0.5 * (theta @ Om @ theta)
    return QpSolution(theta=theta, u=u, v=v, zeta=zeta, lam=lam,
                      report=report, objective=float(pobj),
                      regularized=regularized)


def _factor_with_lift(M):
    """Cholesky of M, applying a proximal diagonal lift only on failure."""
    try:
        return EquilibratedCholesky(M), False
    except sla.LinAlgError:
        pass
    rho = 1e-9 * (np.trace(M) / M.shape[0] + 1.0)
    eye = np.eye(M.shape[0])
    for _ in range(4):
        try:
            return EquilibratedCholesky(M + rho * eye), True
        except sla.LinAlgError:
            rho *= 100.0
    raise SolverError("KKT system is singular beyond the regularization "
                      "budget")


def _pos_step(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float((-x[neg] / dx[neg]).min()))


def dual_objective(solution: QpSolution, problem) -> float:
    """Value of the companion dual at (zeta, eta) read from the solution.

    The dual is min { -b^T zeta + eta' Omega eta / 2 } over
    D^T zeta - Omega eta = a, zeta in [0,1]^{nL}; at a KKT point eta can
    be taken equal to theta, and primal + dual = -(1-c)^T b.
    """
    design = getattr(problem, "design", None)
    if design is None:
        design = as_design(problem.D)
    b = np.asarray(problem.b, dtype=float).ravel()
    Om = _omega_full(problem.omega, design.q)
    return float(-b @ solution.zeta
                 + 0.5 * solution.theta @ Om @ solution.theta)
