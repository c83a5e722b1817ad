import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import CubicSpline

from kselearn.observation import ObservationKind, ObservationOperator, observe, observed_error
from kselearn.spectral import Grid, RealField, SpectralField, inverse_transform, transform


def random_field(grid, seed, cutoff=None):
    r = np.random.default_rng(seed)
    F = transform(RealField(r.normal(size=grid.N), grid))
    if cutoff is not None:
        F = SpectralField(np.where(np.abs(grid.k) <= cutoff, F.coeffs, 0), grid)
    return F


class TestConstruction:
    def test_defaults(self):
        op = ObservationOperator()
        assert op.kind is ObservationKind.FOURIER
        assert op.K == 21

    def test_kind_from_string(self):
        assert ObservationOperator("interpolation").kind is ObservationKind.INTERPOLATION

    def test_invalid_order(self):
        with pytest.raises(ValueError, match="interp_order"):
            ObservationOperator.interpolation(40, "quintic")

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 4"):
            ObservationOperator.interpolation(3, "cubic")

    def test_negative_cutoff(self):
        with pytest.raises(ValueError):
            ObservationOperator.fourier(-1)

    def test_more_points_than_grid(self, small_grid):
        with pytest.raises(ValueError):
            ObservationOperator.interpolation(128).bind(small_grid)

    def test_describe(self):
        assert ObservationOperator.fourier(18).describe() == "fourier(K=18)"
        assert ObservationOperator.interpolation(40).describe() == "cubic-spline(m=40)"


class TestFourier:
    def test_identity_on_band_limited_input(self, grid):
        F = random_field(grid, 1, cutoff=21)
        np.testing.assert_array_equal(observe(ObservationOperator.fourier(21), F).coeffs,
                                      F.coeffs)

    def test_truncates(self, grid):
        F = random_field(grid, 2)
        out = observe(ObservationOperator.fourier(17), F).coeffs
        keep = np.abs(grid.k) <= 17
        np.testing.assert_array_equal(out[keep], F.coeffs[keep])
        assert np.all(out[~keep] == 0)
        assert np.count_nonzero(keep) == 35


@pytest.mark.parametrize("op", [
    ObservationOperator.fourier(21),
    ObservationOperator.fourier(0),
    ObservationOperator.interpolation(40, "linear"),
    ObservationOperator.interpolation(40, "quadratic"),
    ObservationOperator.interpolation(40, "cubic"),
    ObservationOperator.interpolation(37, "cubic"),
], ids=lambda op: op.describe())
class TestOperatorProperties:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
    def test_linear(self, op, seed, a, b):
        g = Grid()
        F, H = random_field(g, seed), random_field(g, seed + 1)
        lhs = observe(op, F * a + H * b).coeffs
        rhs = (observe(op, F) * a + observe(op, H) * b).coeffs
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_idempotent(self, op, seed):
        g = Grid()
        once = observe(op, random_field(g, seed))
        twice = observe(op, once)
        np.testing.assert_allclose(twice.coeffs, once.coeffs, atol=1e-13)

    def test_output_is_real(self, op, grid):
        out = observe(op, random_field(grid, 5))
        assert out.symmetry_defect() < 1e-14
        inverse_transform(out)

    def test_observed_error_is_difference(self, op, grid):
        u, v = random_field(grid, 7), random_field(grid, 8)
        u_obs = observe(op, u)
        np.testing.assert_allclose(observed_error(op, u_obs, v).coeffs,
                                   observe(op, u - v).coeffs, atol=1e-13)


class TestInterpolation:
    def test_nodes_start_at_origin_and_are_even(self, grid):
        idx = ObservationOperator.interpolation(40).bind(grid).indices
        assert idx[0] == 0
        assert len(idx) == 40
        np.testing.assert_array_equal(idx, np.round(np.arange(40) * 512 / 40).astype(int))

    def test_reproduces_samples(self, grid):
        op = ObservationOperator.interpolation(40, "cubic")
        F = random_field(grid, 3)
        bound = op.bind(grid)
        out = inverse_transform(observe(op, F)).values
        np.testing.assert_allclose(out[bound.indices], bound.sample(F.coeffs), atol=1e-12)

    def test_linear_matches_periodic_np_interp(self, grid):
        op = ObservationOperator.interpolation(32, "linear")
        F = random_field(grid, 4)
        bound = op.bind(grid)
        xs = grid.x[bound.indices]
        ys = bound.sample(F.coeffs)
        expected = np.interp(grid.x, xs, ys, period=grid.length)
        np.testing.assert_allclose(inverse_transform(observe(op, F)).values, expected,
                                   atol=1e-12)

    def test_cubic_matches_independent_periodic_spline(self, grid):
        op = ObservationOperator.interpolation(40, "cubic")
        F = random_field(grid, 6, cutoff=30)
        bound = op.bind(grid)
        xs = np.append(grid.x[bound.indices], grid.length)
        ys = bound.sample(F.coeffs)
        spline = CubicSpline(xs, np.append(ys, ys[0]), bc_type="periodic")
        np.testing.assert_allclose(inverse_transform(observe(op, F)).values, spline(grid.x),
                                   atol=1e-11)

    def test_cubic_accuracy_order(self):
        g = Grid(N=1024)
        f = transform(RealField(np.sin(g.x / g.L) + 0.3 * np.cos(2 * g.x / g.L), g))
        exact = inverse_transform(f).values
        ms = [16, 32, 64, 128]
        errors = []
        for m in ms:
            got = inverse_transform(observe(ObservationOperator.interpolation(m), f)).values
            errors.append(np.max(np.abs(got - exact)))
        slope = np.polyfit(np.log(ms), np.log(errors), 1)[0]
        assert slope == pytest.approx(-4.0, abs=0.3)

    def test_constants_are_preserved(self, grid):
        for order in ("linear", "quadratic", "cubic"):
            op = ObservationOperator.interpolation(40, order)
            F = transform(RealField(np.full(grid.N, 2.5), grid))
            np.testing.assert_allclose(observe(op, F).coeffs, F.coeffs, atol=1e-14)
