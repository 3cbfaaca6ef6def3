import numpy as np
import pytest

from sqreg import selection
from sqreg.exceptions import DataError
from sqreg.fit import fit_qr, fit_sqr
from sqreg.selection import (_argmin_prefer_larger, _criterion_values,
                             criterion, select_spar)


class TestCriterion:
    def test_hand_computed_toy(self):
        # n=2, L=1, sigma_bar=e, m_bar=1: BIC = 4 + log 2, AIC = 4 + 2
        aic, bic = _criterion_values(np.e, 1.0, 2)
        assert bic == pytest.approx(4.0 + np.log(2.0))
        assert aic == pytest.approx(6.0)

    def test_bic_penalty_exceeds_aic_penalty_for_n_at_least_8(self,
                                                              toy_data,
                                                              grid9):
        assert toy_data.n >= 8 and np.log(toy_data.n) > 2.0
        fit = fit_sqr(toy_data, grid9, "cubic", spar=1.0)
        aic, bic = criterion(fit, toy_data)
        sigma_bar, m_bar = selection._criterion_components(
            fit, toy_data, selection.default_epsilon(toy_data))
        # same fidelity term, heavier complexity weight in BIC
        assert bic - aic == pytest.approx((np.log(toy_data.n) - 2.0) * m_bar)
        assert bic > aic

    def test_qr_fit_interpolates_at_least_p_points(self, toy_data, grid9):
        fit = fit_qr(toy_data, grid9)
        eps = selection.default_epsilon(toy_data)
        coefs = fit.per_level_coefs
        resid = toy_data.y[None, :] - coefs @ toy_data.X.T
        m = (np.abs(resid) < eps).sum(axis=1)
        assert np.all(m >= toy_data.p)

    def test_zero_loss_pathology_reported(self, grid9):
        from sqreg.assembly import Dataset
        from sqreg.fit import SqrFit
        # integer-exact linear data: residuals vanish to the last bit
        x = np.arange(12.0)
        data = Dataset(np.c_[np.ones(12), x], 2.0 + 3.0 * x)
        fit = SqrFit(method="qr", grid=grid9,
                     per_level_coefs=np.tile([2.0, 3.0], (grid9.L, 1)))
        with pytest.raises(DataError):
            criterion(fit, data)

    def test_bad_epsilon_rejected(self, toy_data, grid9):
        fit = fit_sqr(toy_data, grid9, "cubic", spar=1.0)
        with pytest.raises(DataError):
            criterion(fit, toy_data, epsilon=0.0)


class TestSelectSpar:
    def test_singleton_grid(self, toy_data, grid9):
        curve = select_spar(toy_data, grid9, "cubic", spar_grid=[1.5])
        assert curve.chosen_spar == {"aic": 1.5, "bic": 1.5}

    def test_chosen_attains_minimum(self, toy_data, grid9):
        curve = select_spar(toy_data, grid9, "linear",
                            spar_grid=np.arange(-0.5, 2.6, 0.5))
        for kind, vals in (("aic", curve.aic), ("bic", curve.bic)):
            chosen = curve.chosen_spar[kind]
            idx = np.flatnonzero(np.isclose(curve.spar_grid, chosen))[0]
            assert vals[idx] == np.nanmin(vals)

    def test_deterministic(self, toy_data, grid9):
        g = np.arange(0.0, 2.1, 0.5)
        c1 = select_spar(toy_data, grid9, "cubic", spar_grid=g)
        c2 = select_spar(toy_data, grid9, "cubic", spar_grid=g)
        assert np.array_equal(c1.bic, c2.bic)
        assert c1.chosen_spar == c2.chosen_spar

    def test_sigma_bar_nondecreasing_in_spar(self, toy_data, grid9):
        curve = select_spar(toy_data, grid9, "cubic",
                            spar_grid=np.arange(-1.0, 3.1, 0.5))
        diffs = np.diff(curve.sigma_bar)
        assert np.all(diffs >= -1e-8 * (1 + np.abs(curve.sigma_bar[:-1])))

    def test_failed_point_excluded_with_warning(self, toy_data, grid9,
                                                monkeypatch):
        from sqreg.exceptions import SolverError
        real = selection.fit_sqr

        def flaky(data, grid, method, spar=None, **kw):
            if spar == 1.0:
                raise SolverError("synthetic failure")
            return real(data, grid, method, spar=spar, **kw)

        monkeypatch.setattr(selection, "fit_sqr", flaky)
        with pytest.warns(UserWarning, match="excluded"):
            curve = select_spar(toy_data, grid9, "cubic",
                                spar_grid=[0.5, 1.0, 1.5])
        assert np.isnan(curve.bic[1])
        assert curve.failures and curve.failures[0][0] == 1.0
        assert curve.chosen_spar["bic"] in (0.5, 1.5)

    def test_tie_breaks_toward_larger_spar(self):
        assert _argmin_prefer_larger(np.array([1.0, 2.0, 3.0]),
                                     np.array([5.0, 5.0, 6.0])) == 2.0

    def test_unsorted_grid_rejected(self, toy_data, grid9):
        with pytest.raises(DataError):
            select_spar(toy_data, grid9, "cubic", spar_grid=[2.0, 1.0])

    def test_bad_criterion_kind_rejected(self, toy_data, grid9):
        with pytest.raises(DataError):
            select_spar(toy_data, grid9, "cubic", spar_grid=[1.0],
                        criterion_kind="dic")

    def test_default_grid_span(self):
        g = selection.default_spar_grid()
        assert g[0] == -1.0 and g[-1] == 4.0
        assert np.allclose(np.diff(g), 0.1)
