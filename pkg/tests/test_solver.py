import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppsolve.assembly import DerivativeTerm, EquationSpec, SampleSet, assemble
from ppsolve.constraints import ConstraintSpec
from ppsolve.exceptions import CriterionError, SearchError
from ppsolve.pp import Layout
from ppsolve.solver import (
    RegularizationConfig,
    SearchConfig,
    TikhonovFactorization,
    gcv_score,
    least_squares,
    positive_solve,
    search_fit,
    select_lambda,
    stabilized_interpolation,
    stabilizer_matrix,
    tikhonov_solve,
)


def normal_equation(M, phi, L, lam):
    return np.linalg.solve(M.T @ M + lam * L.T @ L, M.T @ phi)


def explicit_trace(M, L, lam):
    sharp = np.linalg.solve(M.T @ M + lam * L.T @ L, M.T)
    return np.trace(np.eye(M.shape[0]) - M @ sharp)


def runge(x):
    return 1.0 / (1.0 + 25.0 * np.asarray(x) ** 2)


class TestLeastSquares:
    def test_identity(self):
        phi = np.array([1.0, -2.0, 3.5])
        np.testing.assert_array_equal(least_squares(np.eye(3), phi), phi)

    def test_consistent_overdetermined(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(30, 6))
        phi = A @ rng.normal(size=6)
        c = least_squares(A, phi)
        assert np.linalg.norm(A @ c - phi) <= 1e-12 * np.linalg.norm(phi)

    def test_normal_equation_oracle(self):
        rng = np.random.default_rng(1)
        A, phi = rng.normal(size=(50, 10)), rng.normal(size=50)
        np.testing.assert_allclose(least_squares(A, phi), np.linalg.solve(A.T @ A, A.T @ phi), rtol=1e-8)

    def test_rank_deficiency_flagged(self):
        A = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.warns(RuntimeWarning, match="rank-deficient"):
            c = least_squares(A, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(c, [0.5, 0.5])


class TestTikhonov:
    def test_zero_lambda_is_least_squares(self):
        rng = np.random.default_rng(2)
        M, phi = rng.normal(size=(12, 4)), rng.normal(size=12)
        np.testing.assert_allclose(tikhonov_solve(M, phi, np.eye(4), 0.0), least_squares(M, phi), rtol=1e-12)

    def test_small_system_oracle(self):
        rng = np.random.default_rng(3)
        M, phi = rng.normal(size=(5, 3)), rng.normal(size=5)
        np.testing.assert_allclose(tikhonov_solve(M, phi, np.eye(3), 0.1),
                                   normal_equation(M, phi, np.eye(3), 0.1), rtol=1e-10)

    def test_penalty_domination(self):
        rng = np.random.default_rng(4)
        M, phi = rng.normal(size=(10, 4)), rng.normal(size=10)
        norms = [np.linalg.norm(tikhonov_solve(M, phi, np.eye(4), lam)) for lam in np.logspace(-2, 12, 15)]
        assert np.all(np.diff(norms) <= 0)
        assert norms[-1] < 1e-10

    def test_negative_lambda(self):
        with pytest.raises(ValueError):
            tikhonov_solve(np.eye(2), [1, 1], np.eye(2), -1.0)

    def test_factorization_solve_matches_stacked(self):
        rng = np.random.default_rng(5)
        M, L, phi = rng.normal(size=(15, 6)), rng.normal(size=(9, 6)), rng.normal(size=15)
        fac = TikhonovFactorization(M, L)
        for lam in (1e-4, 0.3, 20.0):
            np.testing.assert_allclose(fac.solve(phi, lam), tikhonov_solve(M, phi, L, lam), rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 10), st.integers(0, 10), st.floats(1e-4, 1e2))
def test_normal_equation_equivalence(seed, n, extra, lam):
    rng = np.random.default_rng(seed)
    m = min(20, n + extra)
    M, L, phi = rng.normal(size=(m, n)), rng.normal(size=(n, n)), rng.normal(size=m)
    ref = normal_equation(M, phi, L, lam)
    np.testing.assert_allclose(tikhonov_solve(M, phi, L, lam), ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8), st.floats(1e-3, 1e2))
def test_gcv_trace_exact(seed, n, lam):
    rng = np.random.default_rng(seed)
    M, L = rng.normal(size=(n + 6, n)), rng.normal(size=(n + 2, n))
    fac = TikhonovFactorization(M, L)
    assert fac.trace_complement(lam) == pytest.approx(explicit_trace(M, L, lam), rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_lambda_monotonicity(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(30, 8)) @ np.diag(np.logspace(0, -6, 8))
    L = np.diff(np.eye(8), 2, axis=0)
    phi = M @ rng.normal(size=8) + 1e-3 * rng.normal(size=30)
    fac = TikhonovFactorization(M, L)
    seminorm, resid = [], []
    for lam in np.logspace(-10, 4, 30):
        c = fac.solve(phi, lam)
        seminorm.append(np.linalg.norm(L @ c))
        resid.append(np.linalg.norm(M @ c - phi))
    tol = 1e-7
    assert np.all(np.diff(seminorm) <= tol * (1 + max(seminorm)))
    assert np.all(np.diff(resid) >= -tol * (1 + max(resid)))


class TestGCV:
    def test_identity_independent_of_lambda(self):
        phi = np.array([1.0, 2.0, -1.0, 0.5])
        for lam in (0.01, 1.0, 100.0):
            assert gcv_score(np.eye(4), phi, np.eye(4), lam) == pytest.approx(phi @ phi / 16, rel=1e-12)

    def test_large_lambda_limit(self):
        rng = np.random.default_rng(6)
        M, phi = rng.normal(size=(12, 3)), rng.normal(size=12)
        assert gcv_score(M, phi, np.eye(3), 1e14) == pytest.approx(phi @ phi / 144, rel=1e-6)

    def test_degenerate_denominator(self):
        with pytest.raises(CriterionError):
            gcv_score(np.eye(3), np.ones(3), np.eye(3), 0.0)

    def test_grid_minimum_is_local(self):
        rng = np.random.default_rng(7)
        M = rng.normal(size=(40, 8)) @ np.diag(np.logspace(0, -8, 8))
        phi = M @ np.ones(8) + 1e-4 * rng.normal(size=40)
        cfg = RegularizationConfig(lambda_grid=tuple(np.logspace(-14, 2, 81)), relative_grid=False)
        lam, score = select_lambda(M, phi, np.eye(8), cfg)
        assert score <= gcv_score(M, phi, np.eye(8), lam / 100)
        assert score <= gcv_score(M, phi, np.eye(8), lam * 100)

    def test_deterministic_with_duplicate_grid(self):
        rng = np.random.default_rng(8)
        M, phi = rng.normal(size=(20, 5)), rng.normal(size=20)
        grid = tuple(np.logspace(-6, 1, 15))
        a = select_lambda(M, phi, np.eye(5), RegularizationConfig(lambda_grid=grid))
        b = select_lambda(M, phi, np.eye(5), RegularizationConfig(lambda_grid=grid + grid))
        assert a == b

    def test_well_conditioned_prefers_small_lambda(self):
        rng = np.random.default_rng(9)
        M = np.eye(30) + 0.1 * rng.normal(size=(30, 30))
        M = M[:, :10]
        phi = M @ rng.normal(size=10) + 1e-10 * rng.normal(size=30)
        grid = np.logspace(-16, 2, 60)
        lam, _ = select_lambda(M, phi, np.eye(10), RegularizationConfig(lambda_grid=tuple(grid),
                                                                         relative_grid=False))
        assert lam <= grid[20]


class TestStabilizer:
    def test_identity(self):
        np.testing.assert_array_equal(stabilizer_matrix("identity", Layout([0, 1, 2], [2, 3]), 50), np.eye(7))

    def test_value_constant_integral(self):
        layout = Layout([1.0, 4.0], [3])
        L = stabilizer_matrix("value", layout, 200)
        c = np.array([1.0, 0, 0, 0])
        assert np.linalg.norm(L @ c) ** 2 == pytest.approx(3.0, rel=0.01)

    def test_second_derivative_kills_linear(self):
        layout = Layout([0.0, 1.0, 3.0], [3, 4])
        c = np.array([0.3, 1.2, 0, 0, -1.0, 2.0, 0, 0, 0])
        assert np.linalg.norm(stabilizer_matrix("second_derivative", layout, 300) @ c) == pytest.approx(0, abs=1e-12)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            stabilizer_matrix("curvature", Layout([0, 1], [2]), 10)


class TestPositivity:
    def test_already_nonnegative_is_unchanged(self):
        x = np.linspace(0, 1, 30)
        layout = Layout([0, 1], [4])
        M = assemble(EquationSpec((0, 1), [DerivativeTerm(0)]), SampleSet(x, 1 + x**2), layout).matrix
        L = stabilizer_matrix("second_derivative", layout, 100)
        phi = 1 + x**2
        np.testing.assert_allclose(positive_solve(M, phi, L, 1e-3, layout, 200), tikhonov_solve(M, phi, L, 1e-3),
                                   rtol=1e-10, atol=1e-12)

    def test_ramp_meets_stopping_rule(self):
        x = np.linspace(-1, 1, 80)
        layout = Layout([-1, 1], [10])
        M = assemble(EquationSpec((-1, 1), [DerivativeTerm(0)]), SampleSet(x, x), layout).matrix
        L = stabilizer_matrix("second_derivative", layout, 400)
        phi = np.maximum(0.0, x)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            c = positive_solve(M, phi, L, 1e-6, layout, 500)
        y = evaluate_grid(layout, c, 500)
        assert y.min() >= -1e-6 * np.abs(y).max()
        assert np.abs(M @ c - phi).max() < 0.1

    def test_fit_report_flag(self):
        eq = EquationSpec((-1, 1), [DerivativeTerm(0)], constraints=ConstraintSpec(positivity=True))
        x = np.linspace(-1, 1, 60)
        rep = search_fit(eq, SampleSet(x, np.maximum(0, x) ** 3 - 0.01), SearchConfig(degrees=(9,)))
        assert rep.positivity_converged
        y = rep.solution(np.linspace(-1, 1, 300))
        assert y.min() >= -1e-6 * np.abs(y).max()


def evaluate_grid(layout, c, n):
    from ppsolve.pp import PiecewisePolynomial

    pp = PiecewisePolynomial.from_layout(layout, c)
    return pp(np.linspace(layout.breakpoints[0], layout.breakpoints[-1], n))


class TestSearch:
    def test_cubic_picks_degree_three(self):
        x = np.linspace(-2, 3, 40)
        eq = EquationSpec((-2, 3), [DerivativeTerm(0)])
        rep = search_fit(eq, SampleSet(x, 1 - x + 0.5 * x**3), SearchConfig(max_pieces=1, n_max=12))
        assert rep.degrees == (3,)
        assert rep.residual_norm <= 1e-12 * np.linalg.norm(1 - x + 0.5 * x**3)

    def test_deterministic(self):
        x = np.linspace(0, 2, 60)
        eq = EquationSpec((0, 2), [DerivativeTerm(1), DerivativeTerm(0)], constraints=ConstraintSpec(initial=(1.0,)))
        data = SampleSet(x, np.cos(3 * x) + np.random.default_rng(0).normal(scale=1e-3, size=60))
        a = search_fit(eq, data, SearchConfig(max_pieces=3, n_max=10))
        b = search_fit(eq, data, SearchConfig(max_pieces=3, n_max=10))
        assert a.degrees == b.degrees
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_threads_do_not_change_result(self, monkeypatch):
        x = np.linspace(-1, 1, 120)
        eq = EquationSpec((-1, 1), [DerivativeTerm(0)])
        data = SampleSet(x, runge(x))
        monkeypatch.setenv("PPSOLVE_THREADS", "1")
        a = search_fit(eq, data, SearchConfig(max_pieces=3, n_max=12))
        monkeypatch.setenv("PPSOLVE_THREADS", "4")
        b = search_fit(eq, data, SearchConfig(max_pieces=3, n_max=12))
        assert (a.pieces, a.degrees) == (b.pieces, b.degrees)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_infeasible(self):
        eq = EquationSpec((0, 1), [DerivativeTerm(0)])
        with pytest.raises(SearchError):
            search_fit(eq, SampleSet([0.0, 0.5, 1.0], [1.0, 2.0, 3.0]), SearchConfig(min_degree=5, n_max=8))

    def test_runge_error_monotone_in_max_pieces(self):
        x = np.linspace(-1, 1, 800)
        eq = EquationSpec((-1, 1), [DerivativeTerm(0)])
        data = SampleSet(x, runge(x))
        errors = []
        for k in range(1, 5):
            rep = search_fit(eq, data, SearchConfig(max_pieces=k, n_max=30))
            errors.append(np.abs(rep.solution(x) - runge(x)).max())
        assert all(b <= a for a, b in zip(errors, errors[1:]))
        assert errors[-1] < 1e-6 * errors[0]


class TestStabilizedInterpolation:
    x = np.linspace(-1, 1, 21)
    grid = np.linspace(-1, 1, 1000)

    def test_classical_runge_blowup(self):
        rep = stabilized_interpolation(self.x, runge(self.x), 20, RegularizationConfig(lam=0.0))
        assert np.abs(rep.solution(self.grid)).max() > 50
        np.testing.assert_allclose(rep.solution(self.x), runge(self.x), atol=1e-6)

    def test_gcv_beats_classical(self):
        classical = stabilized_interpolation(self.x, runge(self.x), 20, RegularizationConfig(lam=0.0))
        stabilized = stabilized_interpolation(self.x, runge(self.x), 20)
        err = lambda r: np.abs(r.solution(self.grid) - runge(self.grid)).max()  # noqa: E731
        assert err(stabilized) < err(classical)
        assert stabilized.lam > 0

    @pytest.mark.parametrize("lam", [None, 1e-6, 1.0, 1e4])
    def test_constant_data(self, lam):
        rep = stabilized_interpolation(self.x, np.full(21, 2.5), 20,
                                       RegularizationConfig(stabilizer="second_derivative", lam=lam,
                                                            stabilizer_points=1000))
        assert np.abs(rep.solution(self.grid) - 2.5).max() <= 1e-10
