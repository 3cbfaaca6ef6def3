import numpy as np
import pytest

from sqreg.exceptions import DataError
from sqreg.splines import (QuantileGrid, SplineBasis, delta_phidot,
                           make_grid, penalty_matrix)


class TestMakeGrid:
    def test_paper_grid_47_levels(self):
        grid = make_grid(0.04, 0.96, 0.02)
        assert grid.L == 47
        assert grid.a == pytest.approx(0.04)
        assert grid.b == pytest.approx(0.96)
        assert np.allclose(np.diff(grid.levels), 0.02)

    def test_paper_grid_46_levels(self):
        grid = make_grid(0.05, 0.95, 0.02)
        assert grid.L == 46
        assert grid.levels[1] == pytest.approx(0.07)

    def test_too_few_levels_rejected(self):
        with pytest.raises(DataError):
            make_grid(0.25, 0.75, 0.5)

    def test_non_integral_span_rejected(self):
        with pytest.raises(DataError):
            make_grid(0.1, 0.9, 0.15)

    def test_levels_outside_unit_interval_rejected(self):
        with pytest.raises(DataError):
            make_grid(0.0, 0.9, 0.1)
        with pytest.raises(DataError):
            make_grid(0.1, 1.0, 0.1)


class TestQuantileGrid:
    def test_must_increase(self):
        with pytest.raises(DataError):
            QuantileGrid(np.array([0.1, 0.5, 0.5]))

    def test_min_three_levels(self):
        with pytest.raises(DataError):
            QuantileGrid(np.array([0.2, 0.8]))


class TestBasis:
    @pytest.mark.parametrize("kind,expected_K", [("linear", 9),
                                                 ("cubic", 11)])
    def test_dimension(self, grid9, kind, expected_K):
        assert SplineBasis(kind, grid9).K == expected_K

    def test_hat_function_is_one_at_own_knot(self, grid3):
        basis = SplineBasis("linear", grid3)
        assert np.allclose(basis.evaluate(0.5), [0.0, 1.0, 0.0])

    @pytest.mark.parametrize("kind", ["linear", "cubic"])
    def test_partition_of_unity(self, grid9, kind, rng):
        basis = SplineBasis(kind, grid9)
        taus = rng.uniform(grid9.a, grid9.b, size=10)
        vals = basis.evaluate(taus)
        assert np.abs(vals.sum(axis=1) - 1.0).max() <= 1e-12

    @pytest.mark.parametrize("kind", ["linear", "cubic"])
    def test_first_derivative_matches_finite_difference(self, grid9, kind):
        basis = SplineBasis(kind, grid9)
        h = 1e-7
        for tau in (0.13, 0.47, 0.82):
            fd = (basis.evaluate(tau + h) - basis.evaluate(tau - h)) / (2 * h)
            assert np.abs(fd - basis.evaluate(tau, order=1)).max() <= 1e-6

    def test_second_derivative_matches_finite_difference(self, grid9):
        basis = SplineBasis("cubic", grid9)
        h = 1e-6
        for tau in (0.13, 0.47, 0.82):
            fd = (basis.evaluate(tau + h, order=1)
                  - basis.evaluate(tau - h, order=1)) / (2 * h)
            assert np.abs(fd - basis.evaluate(tau, order=2)).max() <= 1e-6

    def test_linear_second_derivative_is_zero_vector(self, grid9):
        basis = SplineBasis("linear", grid9)
        assert np.all(basis.evaluate(0.37, order=2) == 0.0)

    def test_out_of_range_rejected(self, grid9):
        basis = SplineBasis("cubic", grid9)
        with pytest.raises(DataError):
            basis.evaluate(0.95)
        with pytest.raises(DataError):
            basis.evaluate(0.05)

    def test_bad_order_rejected(self, grid9):
        with pytest.raises(DataError):
            SplineBasis("cubic", grid9).evaluate(0.5, order=3)

    def test_unknown_kind_rejected(self, grid9):
        with pytest.raises(DataError):
            SplineBasis("quartic", grid9)

    @pytest.mark.parametrize("kind,degree", [("linear", 1), ("cubic", 3)])
    def test_reproduces_polynomials_of_its_degree(self, grid9, kind, degree):
        basis = SplineBasis(kind, grid9)
        dense = np.linspace(grid9.a, grid9.b, 200)
        design = basis.evaluate(dense)
        for poly in (np.poly1d([3.0]), np.poly1d([2.0, -1.0]),
                     np.poly1d(np.arange(1.0, degree + 2))):
            coef, *_ = np.linalg.lstsq(design, poly(dense), rcond=None)
            recon = basis.evaluate(grid9.levels) @ coef
            assert np.abs(recon - poly(grid9.levels)).max() <= 1e-10

    def test_linear_derivative_right_continuous_at_interior_knots(self,
                                                                  grid3):
        basis = SplineBasis("linear", grid3)
        at_knot = basis.evaluate(0.5, order=1)
        just_right = basis.evaluate(0.5 + 1e-9, order=1)
        assert np.allclose(at_knot, just_right)

    def test_linear_derivative_left_continuous_at_b(self, grid3):
        basis = SplineBasis("linear", grid3)
        at_b = basis.evaluate(0.9, order=1)
        just_left = basis.evaluate(0.9 - 1e-9, order=1)
        assert np.allclose(at_b, just_left)


class TestPenaltyMatrix:
    def test_zero_smoothing_gives_zero_matrix(self, grid9):
        omega = penalty_matrix(SplineBasis("cubic", grid9), p=2, c=0.0, n=50)
        assert np.all(omega.full() == 0.0)

    def test_linear_in_c(self, grid9):
        basis = SplineBasis("cubic", grid9)
        om1 = penalty_matrix(basis, p=1, c=0.3, n=50)
        om2 = penalty_matrix(basis, p=1, c=0.6, n=50)
        assert np.allclose(om2.full(), 2.0 * om1.full())

    def test_annihilates_linear_coefficient_paths(self, grid9):
        basis = SplineBasis("cubic", grid9)
        omega = penalty_matrix(basis, p=2, c=1.0, n=50)
        # coefficients of beta_j(tau) = 3 + 2 tau in the cubic basis
        dense = np.linspace(grid9.a, grid9.b, 200)
        coef, *_ = np.linalg.lstsq(basis.evaluate(dense), 3.0 + 2.0 * dense,
                                   rcond=None)
        theta = np.concatenate([coef, coef])
        assert omega.quad(theta) <= 1e-10

    def test_positive_semidefinite(self, grid9):
        # PSD is scale-free in c; test where eigensolver noise sits well
        # below the stated slack
        omega = penalty_matrix(SplineBasis("cubic", grid9), p=2, c=0.1,
                               n=1)
        eigs = np.linalg.eigvalsh(omega.full())
        assert eigs.min() >= -1e-10

    def test_block_diagonal_structure(self, grid9):
        omega = penalty_matrix(SplineBasis("cubic", grid9), p=3, c=0.7, n=20)
        assert np.allclose(omega.full(),
                           np.kron(np.eye(3), omega.block))

    def test_c_per_knot_values(self, grid9):
        w = np.arange(1.0, grid9.L + 1)
        omega = penalty_matrix(SplineBasis("cubic", grid9), p=1, c=0.5,
                               weights=w, n=40)
        assert np.allclose(omega.c_per_knot, 40 * 0.5 * w)

    def test_negative_weight_rejected(self, grid9):
        w = np.ones(grid9.L)
        w[3] = -1.0
        with pytest.raises(DataError):
            penalty_matrix(SplineBasis("cubic", grid9), p=1, c=1.0,
                           weights=w, n=10)

    def test_linear_basis_rejected(self, grid9):
        with pytest.raises(DataError):
            penalty_matrix(SplineBasis("linear", grid9), p=1, c=1.0, n=10)

    def test_matvec_matches_full(self, grid9, rng):
        omega = penalty_matrix(SplineBasis("cubic", grid9), p=2, c=0.9, n=30)
        theta = rng.standard_normal(2 * omega.K)
        assert np.allclose(omega.matvec(theta), omega.full() @ theta)
        assert omega.quad(theta) == pytest.approx(theta @ omega.full()
                                                  @ theta)


class TestDeltaPhidot:
    def test_block_count(self, grid9):
        assert delta_phidot(SplineBasis("linear", grid9)).shape == (8, 9)

    def test_globally_linear_path_maps_to_zero(self, grid9):
        basis = SplineBasis("linear", grid9)
        theta = 3.0 + 2.0 * grid9.levels    # hat coefficients = knot values
        assert np.abs(delta_phidot(basis) @ theta).max() <= 1e-12

    def test_tent_slope_change(self, grid3):
        basis = SplineBasis("linear", grid3)
        theta = np.minimum(grid3.levels - 0.1, 0.9 - grid3.levels)
        changes = delta_phidot(basis) @ theta
        assert changes[0] == pytest.approx(-2.0)

    def test_cubic_basis_rejected(self, grid9):
        with pytest.raises(DataError):
            delta_phidot(SplineBasis("cubic", grid9))
