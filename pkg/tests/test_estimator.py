import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kselearn.dynamics import ImexStepper, ModelCoefficients, term_operator, warmup_truth
from kselearn.estimator import (
    BDF_COEFFICIENTS,
    DegenerateSystem,
    EstimatorConfig,
    InsufficientHistory,
    ObservationHistory,
    SynchronizedState,
    assemble_system,
    assimilation_step,
    basis_terms,
    bdf_derivative,
    build_basis,
    initial_state,
    observed_terms,
    relax_update,
    solve_point_estimates,
)
from kselearn.observation import ObservationOperator, observe
from kselearn.spectral import (
    Grid,
    RealField,
    SpectralField,
    inverse_transform,
    l2_norm,
    transform,
)

FOURIER = ObservationOperator.fourier(21)
SPLINE = ObservationOperator.interpolation(40, "cubic")


@pytest.fixture(scope="module")
def truth():
    return warmup_truth(Grid(), dt=1e-3, t_warmup=2.0)


def history_of(profile, grid, times, shape):
    h = ObservationHistory(depth=len(times))
    for t in times:
        h = h.push(t, SpectralField(profile(t) * shape, grid))
    return h


class TestConfig:
    def test_defaults(self):
        cfg = EstimatorConfig(mu=1800.0)
        assert (cfg.alpha, cfg.p, cfg.sigma_min) == (1.0, 3, 1e-10)
        cfg.validate(1e-3)

    @pytest.mark.parametrize("kwargs", [
        dict(mu=0.0), dict(mu=2000.0), dict(mu=10.0, alpha=-1.0), dict(mu=10.0, p=4),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            EstimatorConfig(**kwargs).validate(1e-3)


class TestHistory:
    def test_keeps_newest(self, small_grid):
        h = ObservationHistory(depth=2)
        for t in (0.0, 1.0, 2.0):
            h = h.push(t, SpectralField.zeros(small_grid))
        assert h.times == (1.0, 2.0)
        assert len(h) == 2

    def test_times_must_increase(self, small_grid):
        h = ObservationHistory(depth=3).push(1.0, SpectralField.zeros(small_grid))
        with pytest.raises(ValueError):
            h.push(1.0, SpectralField.zeros(small_grid))


class TestBDF:
    def test_coefficients_consistent(self):
        # weights sum to zero and differentiate t exactly
        for p, (w, denom) in BDF_COEFFICIENTS.items():
            w = np.array(w, dtype=float)
            assert w.sum() == 0
            assert -(w @ np.arange(p + 1)) / denom == pytest.approx(1.0)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_exact_on_polynomials(self, small_grid, p):
        rng = np.random.default_rng(p)
        coeffs = rng.normal(size=p + 1)
        poly = np.polynomial.Polynomial(coeffs)
        shape = transform(RealField(np.cos(small_grid.x / small_grid.L), small_grid)).coeffs
        dt = 0.01
        times = 0.7 + dt * np.arange(p + 1)
        h = history_of(poly, small_grid, times, shape)
        got = bdf_derivative(h, p, dt).coeffs
        expected = poly.deriv()(times[-1]) * shape
        assert np.linalg.norm(got - expected) <= 1e-12 * np.linalg.norm(expected)

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_order(self, small_grid, p):
        shape = transform(RealField(np.sin(small_grid.x / small_grid.L), small_grid)).coeffs
        dts = [0.04, 0.02, 0.01, 0.005]
        errors = []
        for dt in dts:
            times = 1.0 - dt * np.arange(p, -1, -1)
            h = history_of(np.exp, small_grid, times, shape)
            errors.append(np.linalg.norm(bdf_derivative(h, p, dt).coeffs - np.exp(1.0) * shape))
        assert np.polyfit(np.log(dts), np.log(errors), 1)[0] == pytest.approx(p, abs=0.2)

    def test_insufficient_history(self, small_grid):
        h = history_of(np.sin, small_grid, [0.0, 0.1], np.ones(small_grid.N))
        with pytest.raises(InsufficientHistory):
            bdf_derivative(h, 3, 0.1)

    def test_spacing_checked(self, small_grid):
        h = history_of(np.sin, small_grid, [0.0, 0.1], np.ones(small_grid.N))
        with pytest.raises(ValueError, match="spacing"):
            bdf_derivative(h, 1, 0.05)


class TestBasis:
    @pytest.mark.parametrize("unknown, expected", [
        ((2,), ()), ((5,), ()), ((1, 5), (1,)), ((2, 4, 5), (2, 4)),
        ((1, 2, 3, 4), (1, 2, 3)), ((4, 2, 1), (1, 2)),
    ])
    def test_nonlinear_term_excluded(self, unknown, expected):
        assert basis_terms(unknown) == expected

    @pytest.mark.parametrize("op", [FOURIER, SPLINE], ids=["fourier", "spline"])
    def test_gram_is_identity(self, truth, op):
        v = truth * 0.9
        e1 = observe(op, truth - v)
        basis = build_basis(e1, v, (1, 2, 3, 4), op)
        assert len(basis) == 4
        np.testing.assert_allclose(basis.gram(), np.eye(4), atol=1e-10)

    def test_first_vector_is_normalized_error(self, truth):
        v = truth * 0.5
        e1 = observe(FOURIER, truth - v)
        basis = build_basis(e1, v, (2, 4), FOURIER)
        np.testing.assert_allclose(basis.e[0].coeffs, e1.coeffs / l2_norm(e1), atol=1e-15)

    def test_zero_error_is_synchronized(self, truth):
        with pytest.raises(SynchronizedState):
            build_basis(SpectralField.zeros(truth.grid), truth, (2,), FOURIER)

    def test_threshold(self, truth):
        e1 = observe(FOURIER, truth) * 1e-9
        with pytest.raises(SynchronizedState):
            build_basis(e1, truth, (2,), FOURIER, e1_min=1.0)

    def test_dependent_vectors_detected(self, truth):
        # e1 parallel to the observed second derivative
        e1 = observe(FOURIER, term_operator(2, truth)) * 3.0
        with pytest.raises(DegenerateSystem):
            build_basis(e1, truth, (2, 4), FOURIER)


def _physical_inner(F, G):
    f, g = inverse_transform(F).values, inverse_transform(G).values
    return float(np.sum(f * g) * F.grid.dx)


class TestAssembly:
    @pytest.mark.parametrize("unknown", [(2,), (1, 2, 3, 4), (2, 4, 5), (5,)])
    @pytest.mark.parametrize("op", [FOURIER, SPLINE], ids=["fourier", "spline"])
    def test_truth_consistency(self, truth, unknown, op):
        lam = ModelCoefficients.kse(unknown)
        # exact observed time derivative from the equation itself
        rhs = SpectralField.zeros(truth.grid)
        for k in range(1, 6):
            rhs = rhs - term_operator(k, truth) * lam[k]
        u_dot = observe(op, rhs)
        v = truth * 0.97
        e1 = observe(op, truth - v)
        basis = build_basis(e1, truth, unknown, op)
        A, b = assemble_system(basis, truth, u_dot, None, lam, op)
        true_vals = np.array([lam[k] for k in unknown])
        residual = np.abs(A @ true_vals - b).max() / max(np.abs(b).max(), 1.0)
        assert residual < 1e-10
        np.testing.assert_allclose(solve_point_estimates(A, b), true_vals, atol=1e-8)

    def test_entries_match_quadrature(self, truth):
        unknown = (2, 4, 5)
        model = ModelCoefficients.kse(unknown)
        v = truth * 0.8
        e1 = observe(FOURIER, truth - v)
        basis = build_basis(e1, v, unknown, FOURIER)
        u_dot = observe(FOURIER, term_operator(2, truth))
        A, b = assemble_system(basis, v, u_dot, None, model, FOURIER)
        terms = observed_terms(v, FOURIER)
        rhs = -(u_dot + terms[1] * 0.0 + terms[3] * 0.0)
        for i, e in enumerate(basis.e):
            for j, k in enumerate(unknown):
                assert A[i, j] == pytest.approx(_physical_inner(e, terms[k]), rel=1e-9, abs=1e-12)
            assert b[i] == pytest.approx(_physical_inner(e, rhs), rel=1e-9, abs=1e-12)


class TestSolve:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5))
    def test_matches_dense_solve(self, seed, n):
        r = np.random.default_rng(seed)
        A = r.normal(size=(n, n)) + n * np.eye(n)
        b = r.normal(size=n)
        np.testing.assert_allclose(solve_point_estimates(A, b), np.linalg.solve(A, b),
                                   rtol=1e-10, atol=1e-12)

    def test_singular(self):
        with pytest.raises(DegenerateSystem):
            solve_point_estimates(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_point_estimates(np.eye(2), np.ones(3))


class TestRelaxation:
    def test_fixed_point(self):
        lam = np.array([0.3, -2.0])
        np.testing.assert_allclose(relax_update(lam, lam, 5.0, 1e-3), lam, rtol=1e-15)

    def test_geometric_rate(self):
        alpha, dt = 3.0, 1e-2
        factor = (1 - alpha * dt / 2) / (1 + alpha * dt / 2)
        lam_hat, target = np.array([2.0]), np.array([1.0])
        for n in range(1, 50):
            lam_hat = relax_update(lam_hat, target, alpha, dt)
            assert lam_hat[0] - 1.0 == pytest.approx(factor**n, rel=1e-12)

    def test_matches_exponential_to_second_order(self):
        alpha, T = 2.0, 1.0
        errs = []
        dts = [0.1, 0.05, 0.025]
        for dt in dts:
            lam = np.array([1.0])
            for _ in range(round(T / dt)):
                lam = relax_update(lam, np.zeros(1), alpha, dt)
            errs.append(abs(lam[0] - np.exp(-alpha * T)))
        assert np.polyfit(np.log(dts), np.log(errs), 1)[0] == pytest.approx(2.0, abs=0.1)

    def test_zero_rate_freezes(self):
        np.testing.assert_array_equal(relax_update([2.0], [1.0], 0.0, 1e-3), [2.0])


class TestAssimilationStep:
    def test_synchronized_fixed_point(self, truth):
        grid = truth.grid
        model = ModelCoefficients.kse((2,))
        cfg = EstimatorConfig(mu=1800.0)
        stepper = ImexStepper(grid, ModelCoefficients(), 1e-3)
        state = initial_state(truth, [1.0], cfg.p)
        u = truth
        for j in range(6):
            state = assimilation_step(state, observe(FOURIER, u), model, cfg, FOURIER, 1e-3)
            u = stepper.step(u)
            assert state.suspended
            assert l2_norm(state.v - u) <= 1e-13 * l2_norm(u)
        np.testing.assert_array_equal(state.lambda_hat, [1.0])

    def test_updates_only_when_active(self, truth):
        grid = truth.grid
        model = ModelCoefficients.kse((2,))
        cfg = EstimatorConfig(mu=1800.0)
        stepper = ImexStepper(grid, ModelCoefficients(), 1e-3)
        state = initial_state(SpectralField.zeros(grid), [2.0], cfg.p)
        u = truth
        for _ in range(8):
            before = state.lambda_hat.copy()
            state = assimilation_step(state, observe(FOURIER, u), model, cfg, FOURIER, 1e-3)
            u = stepper.step(u)
            if state.suspended:
                np.testing.assert_array_equal(state.lambda_hat, before)
        assert state.step == 8
        assert state.t == pytest.approx(8e-3)

    def test_first_step_has_no_derivative(self, truth):
        cfg = EstimatorConfig(mu=1800.0)
        state = initial_state(SpectralField.zeros(truth.grid), [2.0], cfg.p)
        state = assimilation_step(state, observe(FOURIER, truth), ModelCoefficients.kse((2,)),
                                  cfg, FOURIER, 1e-3)
        assert state.suspended

    def test_nudging_contracts_observed_error(self, truth):
        # with exact parameters, the observed error shrinks by about |1 - mu dt| per step
        cfg = EstimatorConfig(mu=1000.0)
        model = ModelCoefficients()
        stepper = ImexStepper(truth.grid, model, 1e-3)
        state = initial_state(SpectralField.zeros(truth.grid), [], cfg.p)
        u = truth
        norms = []
        for _ in range(5):
            state = assimilation_step(state, observe(FOURIER, u), model, cfg, FOURIER, 1e-3)
            u = stepper.step(u)
            norms.append(state.obs_error_norm)
        assert norms[-1] < 0.2 * norms[0]
