"""Shared dense linear-algebra helpers for the interior-point solvers."""

import numpy as np
import scipy.linalg as sla

__all__ = ["EquilibratedCholesky"]


class EquilibratedCholesky:
    """Cholesky solve of a symmetric PD matrix after Jacobi equilibration.

    The matrix is scaled symmetrically by the inverse square roots of its
    diagonal before factorization, which makes pivot ratios meaningful as a
    rank test regardless of how the problem itself is scaled; the scaling
    is undone inside :meth:`solve`.
    """

    def __init__(self, M):
        d = np.diagonal(M).copy()
        bad = d <= 0.0
        if np.any(bad):
            raise sla.LinAlgError("nonpositive diagonal in normal matrix")
        self.s = 1.0 / np.sqrt(d)
        Ms = M * self.s[:, None] * self.s[None, :]
        self.cho = sla.cho_factor(Ms, lower=False, check_finite=False)

    def pivot_ratio(self) -> float:
        """min/max ratio of the squared Cholesky pivots (scaled matrix)."""
        piv = np.diagonal(self.cho[0]) ** 2
        return float(piv.min() / piv.max())

    def solve(self, rhs):
        return self.s * sla.cho_solve(self.cho, self.s * rhs,
                                      check_finite=False)
