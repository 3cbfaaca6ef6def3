"""Design operators for the interior-point solvers.

Both solvers only touch the constraint matrix through three operations:
matvec, rmatvec, and the weighted normal matrix C^T diag(w) C.  The
stacked quantile-regression designs factor over levels (each row block is
X Phi(tau_l) with Phi(tau_l) = I_p (x) phi^T(tau_l)), so those operations
reduce to small einsums instead of generic sparse products.
"""

import numpy as np
import scipy.sparse as sps

__all__ = ["MatrixDesign", "StackedDesign", "as_design"]


class MatrixDesign:
    """Generic wrapper around a dense or sparse matrix."""

    def __init__(self, C):
        if sps.issparse(C):
            C = C.tocsr()
        else:
            C = np.asarray(C, dtype=float)
            if C.ndim != 2:
                raise ValueError("constraint matrix must be 2-d")
        self.C = C
        self.m, self.q = C.shape
        self._sparse = sps.issparse(C)

    def matvec(self, x):
        return self.C @ x

    def rmatvec(self, w):
        return self.C.T @ w

    def normal(self, w):
        """Dense q-by-q matrix C^T diag(w) C."""
        if self._sparse:
            M = (self.C.T @ self.C.multiply(w[:, None])).toarray()
        else:
            M = self.C.T @ (self.C * w[:, None])
        return 0.5 * (M + M.T)


class StackedDesign:
    """Level-stacked design [D; 2P] with Kronecker row blocks.

    D stacks kron(X, phi^T(tau_l)) over the L levels (n rows each); the
    optional penalty part stacks 2 * c_l * (I_p (x) d_l^T) over l = 1..L-1.
    Pass ``diff_rows=None`` for the QP design, which has no penalty rows.
    """

    def __init__(self, X, basis_rows, c_diff=None, diff_rows=None):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.B = np.ascontiguousarray(basis_rows, dtype=float)  # (L, K)
        self.n, self.p = self.X.shape
        self.L, self.K = self.B.shape
        self.q = self.p * self.K
        self._Bwin = _compact_rows(self.B)
        if diff_rows is None:
            self.Dm = None
            self.c_diff = None
            self.m = self.n * self.L
        else:
            self.Dm = np.ascontiguousarray(diff_rows, dtype=float)  # (L-1, K)
            self.c_diff = np.asarray(c_diff, dtype=float)           # (L-1,)
            self.m = self.n * self.L + self.p * (self.L - 1)
            self._Dwin = _compact_rows(self.Dm)

    def _split(self, w):
        ny = self.n * self.L
        return w[:ny].reshape(self.L, self.n), w[ny:].reshape(-1, self.p)

    def matvec(self, theta):
        tm = theta.reshape(self.p, self.K)
        vals = tm @ self.B.T                      # (p, L) coefficients at knots
        out_y = (vals.T @ self.X.T).ravel()       # level blocks of X beta(tau_l)
        if self.Dm is None:
            return out_y
        sc = tm @ self.Dm.T                       # (p, L-1) slope changes
        out_p = (2.0 * self.c_diff[:, None] * sc.T).ravel()
        return np.concatenate([out_y, out_p])

    def rmatvec(self, w):
        if self.Dm is None:
            W = w.reshape(self.L, self.n)
            return ((W @ self.X).T @ self.B).ravel()
        W, Wp = self._split(w)
        out = ((W @ self.X).T @ self.B)           # (p, K)
        out += (2.0 * self.c_diff[:, None] * Wp).T @ self.Dm
        return out.ravel()

    def normal(self, w):
        if self.Dm is None:
            W = w.reshape(self.L, self.n)
            Wp = None
        else:
            W, Wp = self._split(w)
        p, K = self.p, self.K
        G = np.einsum("lt,tj,tk->ljk", W, self.X, self.X)
        # Accumulate sum_l G_l (x) (phi_l phi_l^T) using the local support
        # of the basis rows: each level touches one small window of columns.
        M = np.zeros((p, K, p, K))
        off, vals = self._Bwin
        for l in range(self.L):
            o = off[l]
            bb = np.outer(vals[l], vals[l])
            win = slice(o, o + bb.shape[0])
            M[:, win, :, win] += G[l][:, None, :, None] * bb[None, :, None, :]
        if Wp is not None:
            scale = 4.0 * self.c_diff[:, None] ** 2 * Wp   # (L-1, p)
            doff, dvals = self._Dwin
            for l in range(self.L - 1):
                o = doff[l]
                dd = np.outer(dvals[l], dvals[l])
                win = slice(o, o + dd.shape[0])
                M[:, win, :, win] += (np.diag(scale[l])[:, None, :, None]
                                      * dd[None, :, None, :])
        M = M.reshape(self.q, self.q)
        return 0.5 * (M + M.T)


def _compact_rows(B):
    """Offsets and values of the nonzero window of each row of B."""
    L, K = B.shape
    width = 1
    offsets = np.zeros(L, dtype=int)
    for l in range(L):
        nz = np.flatnonzero(B[l])
        if nz.size:
            offsets[l] = nz[0]
            width = max(width, nz[-1] - nz[0] + 1)
    offsets = np.minimum(offsets, K - width)
    vals = np.stack([B[l, offsets[l]:offsets[l] + width] for l in range(L)])
    return offsets, vals


def as_design(C):
    """Wrap a matrix into the design-operator interface; pass through
    objects that already provide it."""
    if hasattr(C, "normal") and hasattr(C, "matvec"):
        return C
    return MatrixDesign(C)
