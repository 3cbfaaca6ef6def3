import numpy as np
import pytest

from sqreg import assembly
from sqreg.assembly import (Dataset, build_lp, build_qp, smoothing_scale,
                            spar_to_c)
from sqreg.exceptions import DataError
from sqreg.splines import SplineBasis, make_grid


class TestDataset:
    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            Dataset(np.ones((4, 2)), np.ones(3))

    def test_nonfinite_rejected(self):
        X = np.ones((4, 1))
        y = np.array([1.0, np.nan, 2.0, 3.0])
        with pytest.raises(DataError):
            Dataset(X, y)

    def test_more_columns_than_rows_rejected(self):
        with pytest.raises(DataError):
            Dataset(np.ones((2, 3)), np.ones(2))


class TestBuildQp:
    def test_paper_dimensions(self, rng):
        n, p = 100, 2
        data = Dataset(rng.standard_normal((n, p)) + 3.0,
                       rng.standard_normal(n))
        grid = make_grid(0.04, 0.96, 0.02)
        prob = build_qp(data, SplineBasis("cubic", grid), c=0.1)
        assert prob.D.shape == (4700, 98)
        assert prob.omega.full().shape == (98, 98)
        assert prob.b.shape == (4700,)
        assert np.allclose(prob.b[:n], data.y)

    def test_zero_smoothing(self, toy_data, grid9):
        prob = build_qp(toy_data, SplineBasis("cubic", grid9), c=0.0)
        assert np.all(prob.omega.full() == 0.0)

    def test_intercept_only_rows_are_basis_values(self, grid9, rng):
        n = 6
        data = Dataset(np.ones((n, 1)), rng.standard_normal(n))
        basis = SplineBasis("cubic", grid9)
        prob = build_qp(data, basis, c=0.2)
        D = prob.D.toarray()
        for l in range(grid9.L):
            row = D[l * n + 2]
            assert np.allclose(row, basis.evaluate(grid9.levels[l]))

    def test_c_vec_blocks(self, toy_data, grid9):
        prob = build_qp(toy_data, SplineBasis("cubic", grid9), c=0.1)
        c = prob.c_vec.reshape(grid9.L, toy_data.n)
        assert np.allclose(c, grid9.levels[:, None])

    def test_linear_basis_rejected(self, toy_data, grid9):
        with pytest.raises(DataError):
            build_qp(toy_data, SplineBasis("linear", grid9), c=0.1)

    def test_size_guard(self, toy_data, grid9, monkeypatch):
        monkeypatch.setattr(assembly, "MAX_STACKED_ROWS", 100)
        with pytest.raises(DataError, match="cap"):
            build_qp(toy_data, SplineBasis("cubic", grid9), c=0.1)


class TestBuildLp:
    def test_paper_dimensions(self, rng):
        n, p = 100, 2
        data = Dataset(rng.standard_normal((n, p)) + 3.0,
                       rng.standard_normal(n))
        grid = make_grid(0.04, 0.96, 0.02)
        prob = build_lp(data, SplineBasis("linear", grid), c=0.1)
        assert prob.C.shape == (4700 + 92, 94)
        assert prob.a.shape == (94,)
        assert prob.b.shape == (4792,)
        assert np.all(prob.b[4700:] == 0.0)

    def test_zero_smoothing_kills_penalty_rows(self, toy_data, grid9):
        prob = build_lp(toy_data, SplineBasis("linear", grid9), c=0.0)
        nL = toy_data.n * grid9.L
        assert prob.C[nL:].count_nonzero() == 0

    def test_a_vector_against_naive_sums(self, rng):
        # p=1, L=3, n=4, c=1, w=1: recompute a by direct double loops
        n = 4
        data = Dataset(rng.standard_normal((n, 1)), rng.standard_normal(n))
        grid = make_grid(0.25, 0.75, 0.25)
        basis = SplineBasis("linear", grid)
        prob = build_lp(data, basis, c=1.0)
        a_naive = np.zeros(basis.K)
        for l, tau in enumerate(grid.levels):
            phi = basis.evaluate(tau)
            for t in range(n):
                a_naive += (1.0 - tau) * phi * data.X[t, 0]
        for l in range(grid.L - 1):
            d = (basis.evaluate(grid.levels[l + 1], order=1)
                 - basis.evaluate(grid.levels[l], order=1))
            a_naive += n * 1.0 * d          # c_l = n c w_l, p = 1
        assert np.allclose(prob.a, a_naive, atol=1e-12)

    def test_cubic_basis_rejected(self, toy_data, grid9):
        with pytest.raises(DataError):
            build_lp(toy_data, SplineBasis("cubic", grid9), c=0.1)


class TestDesignConsistency:
    def test_row_extraction_matches_direct_product(self, toy_data, grid9,
                                                   rng):
        basis = SplineBasis("cubic", grid9)
        prob = build_qp(toy_data, basis, c=0.3)
        theta = rng.standard_normal(prob.D.shape[1])
        K = basis.K
        for l, t in [(0, 0), (3, 17), (8, 59)]:
            row_val = prob.D[l * toy_data.n + t] @ theta
            direct = toy_data.X[t] @ (theta.reshape(toy_data.p, K)
                                      @ basis.evaluate(grid9.levels[l]))
            assert abs(row_val - direct) <= 1e-12

    @pytest.mark.parametrize("builder,kind", [(build_qp, "cubic"),
                                              (build_lp, "linear")])
    def test_design_operators_match_sparse_matrix(self, toy_data, grid9,
                                                  rng, builder, kind):
        prob = builder(toy_data, SplineBasis(kind, grid9), c=0.4)
        mat = prob.D if kind == "cubic" else prob.C
        v = rng.standard_normal(mat.shape[1])
        w = rng.standard_normal(mat.shape[0])
        assert np.abs(prob.design.matvec(v) - mat @ v).max() <= 1e-12
        assert np.abs(prob.design.rmatvec(w) - mat.T @ w).max() <= 1e-10
        weights = rng.uniform(0.5, 2.0, size=mat.shape[0])
        direct = (mat.T @ mat.multiply(weights[:, None])).toarray()
        assert np.abs(prob.design.normal(weights) - direct).max() <= 1e-9


class TestSparToC:
    def test_spar_one_gives_r(self, toy_data, grid9):
        basis = SplineBasis("cubic", grid9)
        r = smoothing_scale(toy_data, basis)
        assert spar_to_c(1.0, toy_data, basis) == pytest.approx(r)

    def test_spar_two_gives_thousand_r(self, toy_data, grid9):
        basis = SplineBasis("linear", grid9)
        r = smoothing_scale(toy_data, basis)
        assert spar_to_c(2.0, toy_data, basis) == pytest.approx(1000.0 * r)

    def test_hand_computed_linear_scale(self):
        # intercept-only, n=10, hat basis on {0.1, 0.5, 0.9}:
        # numerator = L * sum|X| / n = 3; denominator = |(2.5,-5,2.5)|_1
        # for the first slope change (the last one is zero), so r = 0.3.
        data = Dataset(np.ones((10, 1)), np.arange(10.0))
        basis = SplineBasis("linear", make_grid(0.1, 0.9, 0.4))
        assert smoothing_scale(data, basis) == pytest.approx(0.3)

    def test_strictly_increasing_in_spar(self, toy_data, grid9):
        basis = SplineBasis("cubic", grid9)
        cs = [spar_to_c(s, toy_data, basis) for s in (-1.0, 0.0, 1.0, 2.5)]
        assert np.all(np.diff(cs) > 0)

    def test_nonfinite_spar_rejected(self, toy_data, grid9):
        with pytest.raises(DataError):
            spar_to_c(np.inf, toy_data, SplineBasis("cubic", grid9))
