import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ppsolve import (
    ConstraintSpec,
    DerivativeTerm,
    EquationSpec,
    IntegralTerm,
    IntegroDifferentialSolver,
    Kernel,
    PiecewisePolynomialRegressor,
    SearchConfig,
    StabilizedInterpolator,
)
from ppsolve.exceptions import DataError, DomainError


class TestRegressor:
    def test_params_and_clone(self):
        reg = PiecewisePolynomialRegressor(max_pieces=3, n_max=9, positivity=True)
        params = reg.get_params()
        assert params["max_pieces"] == 3 and params["positivity"] is True
        twin = clone(reg)
        assert twin.get_params() == params and not hasattr(twin, "solution_")
        assert reg.set_params(n_max=5).n_max == 5

    def test_fit_predict_column_input(self):
        x = np.linspace(0, 2, 80)
        y = np.exp(x)
        reg = PiecewisePolynomialRegressor(max_pieces=2, n_max=14).fit(x.reshape(-1, 1), y)
        assert reg.n_features_in_ == 1
        np.testing.assert_allclose(reg.predict(x[:, None]), y, rtol=1e-9)
        np.testing.assert_allclose(reg.predict([1.0], order=1), np.e, rtol=1e-7)
        assert reg.score(x[:, None], y) == pytest.approx(1.0)
        assert reg.coef_.size == sum(d + 1 for d in reg.degrees_)

    def test_unsorted_input_sorted(self):
        x = np.array([0.5, 0.0, 1.0, 0.25, 0.75, 0.1, 0.9])
        reg = PiecewisePolynomialRegressor(pieces=1, degrees=[2]).fit(x, x**2)
        np.testing.assert_allclose(reg.predict([0.3]), 0.09, atol=1e-12)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            PiecewisePolynomialRegressor().predict([0.0])

    def test_outside_domain(self):
        x = np.linspace(0, 1, 20)
        reg = PiecewisePolynomialRegressor(max_pieces=1, n_max=3).fit(x, x)
        with pytest.raises(DomainError):
            reg.predict([1.5])

    def test_bad_input(self):
        with pytest.raises(DataError):
            PiecewisePolynomialRegressor().fit(np.ones((4, 2)), np.ones(4))
        with pytest.raises(DataError, match="duplicate"):
            PiecewisePolynomialRegressor().fit([0, 1, 1, 2], [0, 1, 2, 3])
        with pytest.raises(ValueError):
            PiecewisePolynomialRegressor().fit([0, 1, np.nan, 2], [0, 1, 2, 3])

    def test_positivity(self):
        x = np.linspace(-1, 1, 60)
        reg = PiecewisePolynomialRegressor(pieces=1, degrees=[8], positivity=True).fit(x, np.abs(x) - 0.05)
        assert reg.predict(np.linspace(-1, 1, 301)).min() >= -1e-6


class TestIntegroDifferentialSolver:
    def test_volterra_second_kind(self):
        k = Kernel(lambda x, t: 2 * x - t)
        eq = EquationSpec((0.0, 2.0), (DerivativeTerm(0),), (IntegralTerm(k, "volterra", 0.0),))
        x = np.linspace(0, 2, 60)
        s = IntegroDifferentialSolver(eq, SearchConfig(max_pieces=2, n_max=16)).fit(x, -np.ones(60))
        exact = (x**2 - 1) * np.exp(-(x**2) / 2)
        np.testing.assert_allclose(s.predict(x), exact, atol=1e-8)
        np.testing.assert_allclose(s.apply(x), -1.0, atol=1e-9)
        target = s.apply(x) + 1e-3 * np.sin(x)
        assert s.score(x, target) < 1.0
        assert s.score(x, s.apply(x)) == pytest.approx(1.0)

    def test_clone_keeps_equation(self):
        eq = EquationSpec((0.0, 1.0), (DerivativeTerm(1), DerivativeTerm(0)),
                          constraints=ConstraintSpec(initial=(1.0,)))
        s = IntegroDifferentialSolver(eq)
        twin = clone(s)
        assert twin.equation.domain == eq.domain
        assert twin.equation.constraints == eq.constraints

    def test_requires_equation(self):
        with pytest.raises(DataError):
            IntegroDifferentialSolver("y' = y").fit([0, 1], [0, 0])


class TestStabilizedInterpolator:
    def test_runge(self):
        x = np.linspace(-1, 1, 21)
        y = 1 / (1 + 25 * x**2)
        grid = np.linspace(-1, 1, 1000)
        truth = 1 / (1 + 25 * grid**2)
        classical = StabilizedInterpolator(lam=0.0).fit(x, y)
        stable = StabilizedInterpolator().fit(x, y)
        assert np.abs(stable.predict(grid) - truth).max() < np.abs(classical.predict(grid) - truth).max()
        assert stable.lambda_ > 0 and classical.lambda_ == 0

    def test_params(self):
        est = StabilizedInterpolator(degree=5, lambda_grid=[1e-3, 1e-1])
        assert clone(est).get_params()["lambda_grid"] == [1e-3, 1e-1]
