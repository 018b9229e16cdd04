"""Minimum-norm interpolation and its exact pointwise posteriors."""

from __future__ import annotations

import math

import numpy as np
import pytest

from sipr.errors import (
    CoincidesWithDatapoint,
    ConstraintViolated,
    DimensionMismatch,
    DuplicatePoints,
)
from sipr.geometry import eta_norm_constant, greens_matrix, monomial_matrix
from sipr.interpolate import (
    POLYNOMIAL_TOL,
    draw_sample_path,
    eta_norm_sq,
    pointwise_posterior,
    solve_interpolation,
)
from sipr.interpolate import test_function as make_test_function
from tests.conftest import random_dataset


class TestSolveInterpolation:
    def test_reproduces_data_exactly(self):
        X, y = random_dataset(20, 2, seed=5)
        model = solve_interpolation(X, y, 1.5)
        np.testing.assert_allclose(model.evaluate(X), y, rtol=0, atol=1e-9)

    def test_eta_half_is_piecewise_linear_in_1d(self):
        # For eta = 0.5 in one dimension the minimum-norm interpolant is the
        # broken-line interpolant, so np.interp is an exact oracle.
        X = np.sort(np.random.default_rng(0).uniform(size=15))
        y = np.cos(4.0 * X)
        model = solve_interpolation(X, y, 0.5)
        probes = np.linspace(X.min(), X.max(), 200)
        np.testing.assert_allclose(
            model.evaluate(probes[:, None]), np.interp(probes, X, y), atol=1e-10
        )

    def test_polynomial_data_yields_zero_kernel_part(self):
        # y = 1 + 2 x lies in the nullspace of the eta = 1.5 penalty, so the
        # interpolant must be that polynomial itself, everywhere.
        X = np.linspace(0.0, 1.0, 7)[:, None]
        y = 1.0 + 2.0 * X[:, 0]
        model = solve_interpolation(X, y, 1.5)
        assert np.abs(model.a).max() < 1e-8
        np.testing.assert_allclose(model.c, [1.0, 2.0], atol=1e-8)
        assert model.evaluate(np.array([[10.0]]))[0] == pytest.approx(21.0, abs=1e-6)
        assert model.norm_sq <= POLYNOMIAL_TOL * float(y @ y)

    def test_coefficients_satisfy_growth_constraint(self):
        X, y = random_dataset(15, 2, seed=9)
        model = solve_interpolation(X, y, 2.5)
        M = monomial_matrix(X, 2.5)
        assert np.abs(M @ model.a).max() < 1e-8

    def test_permutation_invariance(self):
        X, y = random_dataset(12, 1, seed=3)
        perm = np.random.default_rng(4).permutation(12)
        probes = np.linspace(0.1, 0.9, 9)[:, None]
        f1 = solve_interpolation(X, y, 1.5).evaluate(probes)
        f2 = solve_interpolation(X[perm], y[perm], 1.5).evaluate(probes)
        np.testing.assert_allclose(f1, f2, rtol=1e-9, atol=1e-12)

    def test_affine_covariance(self):
        # The kernel depends only on distances and the nullspace is closed
        # under affine maps, so rescaling and shifting the inputs moves the
        # interpolant with them.
        X, y = random_dataset(14, 1, seed=6)
        probes = np.linspace(0.05, 0.95, 7)[:, None]
        f_ref = solve_interpolation(X, y, 1.5).evaluate(probes)
        f_map = solve_interpolation(X * 37.0 - 5.0, y, 1.5).evaluate(probes * 37.0 - 5.0)
        np.testing.assert_allclose(f_map, f_ref, rtol=1e-8, atol=1e-10)

    def test_input_validation(self):
        with pytest.raises(DimensionMismatch):
            solve_interpolation(np.zeros((3, 1)), np.zeros(4), 1.5)
        with pytest.raises(DuplicatePoints):
            solve_interpolation(np.array([[0.0], [0.0], [1.0]]), np.zeros(3), 1.5)
        with pytest.raises(DimensionMismatch):
            solve_interpolation(np.array([[0.0], [1.0]]), np.array([0.0, np.nan]), 0.5)


class TestNorm:
    def test_matches_quadratic_form(self):
        X, y = random_dataset(10, 1, seed=2)
        model = solve_interpolation(X, y, 1.5)
        G = greens_matrix(X, 1.5)
        C = eta_norm_constant(1, 1.5)
        expected = C * float(model.a @ G @ model.a)
        assert eta_norm_sq(model.a, G, 1.5, 1) == pytest.approx(expected, rel=1e-12)
        assert model.norm_sq == pytest.approx(expected, rel=1e-9)

    def test_positive_for_nonpolynomial_data(self):
        X, y = random_dataset(10, 2, seed=11)
        model = solve_interpolation(X, y, 1.5)
        assert model.norm_sq > 0

    def test_constraint_checked_when_m_given(self):
        X = np.linspace(0.0, 1.0, 5)[:, None]
        G = greens_matrix(X, 1.5)
        M = monomial_matrix(X, 1.5)
        a = np.ones(5)  # sum a != 0 violates the degree-0 constraint
        with pytest.raises(ConstraintViolated):
            eta_norm_sq(a, G, 1.5, 1, M=M)

    def test_interpolant_minimizes_norm(self):
        # Any other function through the same data has a larger norm. Build
        # competitors by interpolating the data plus one extra constrained
        # point at varying heights.
        X, y = random_dataset(8, 1, seed=13)
        eta = 1.5
        base = solve_interpolation(X, y, eta).norm_sq
        x_new = np.vstack([X, [[0.456]]])
        f_min = solve_interpolation(X, y, eta).evaluate(np.array([[0.456]]))[0]
        for dy in [-1.0, -0.1, 0.1, 1.0]:
            rival = solve_interpolation(x_new, np.append(y, f_min + dy), eta)
            assert rival.norm_sq > base
        # Pinning the extra point at the interpolant's own value changes nothing.
        same = solve_interpolation(x_new, np.append(y, f_min), eta)
        assert same.norm_sq == pytest.approx(base, rel=1e-6)


class TestTestFunction:
    def test_unit_at_probe_zero_on_data(self):
        X, _ = random_dataset(9, 2, seed=17)
        x_t = np.array([0.33, 0.71])
        tf = make_test_function(X, x_t, 1.5)
        assert tf.model.evaluate(x_t[None, :])[0] == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(tf.model.evaluate(X), np.zeros(9), atol=1e-9)
        assert tf.norm_sq > 0

    def test_probe_on_datapoint_rejected(self):
        X = np.array([[0.0], [0.5], [1.0]])
        with pytest.raises(CoincidesWithDatapoint, match="datapoint 1"):
            make_test_function(X, np.array([0.5]), 1.5)


class TestPointwisePosterior:
    # Three points, eta = 0.5: the posterior t has dof = N - N0 = 2 and the
    # mean is the broken-line interpolant. The scale value is frozen from an
    # exact solve of the 3 x 3 system.
    X3 = np.array([[0.0], [0.4], [1.0]])
    y3 = np.array([0.2, -0.5, 0.9])

    def test_frozen_three_point_instance(self):
        post = pointwise_posterior(self.X3, self.y3, 0.5, np.array([0.7]))
        assert post.dof == 2
        assert post.mean == pytest.approx(0.2, abs=1e-12)
        assert post.scale == pytest.approx(0.5804093383121949, rel=1e-9)
        assert math.isnan(post.sd)  # dof <= 2 has no finite variance
        assert not post.is_point_mass

    def test_point_mass_at_datapoint(self):
        post = pointwise_posterior(self.X3, self.y3, 0.5, np.array([0.4]))
        assert post.is_point_mass
        assert post.mean == pytest.approx(-0.5)
        assert post.scale == 0.0
        assert post.sd == 0.0

    def test_probe_numerically_on_datapoint_takes_coincident_limit(self):
        # A probe a hair away from a datapoint makes the augmented test
        # system numerically singular; the returned posterior should be the
        # coincident point mass rather than an error.
        post = pointwise_posterior(self.X3, self.y3, 1.5, np.array([0.4 + 1e-9]))
        assert post.is_point_mass
        assert post.mean == pytest.approx(-0.5, abs=1e-6)

    def test_sd_defined_above_two_dof(self):
        X, y = random_dataset(8, 1, seed=19)  # dof = 8 - 2 = 6 for eta = 1.5
        post = pointwise_posterior(X, y, 1.5, np.array([0.52]))
        assert post.dof == 6
        assert post.sd == pytest.approx(post.scale * math.sqrt(6.0 / 4.0), rel=1e-12)

    def test_polynomial_data_is_point_mass_everywhere(self):
        X = np.linspace(0.0, 1.0, 6)[:, None]
        y = 3.0 - 2.0 * X[:, 0]
        post = pointwise_posterior(X, y, 1.5, np.array([0.77]))
        assert post.is_point_mass
        assert post.mean == pytest.approx(3.0 - 2.0 * 0.77, abs=1e-9)

    def test_prefitted_model_matches_direct_call(self):
        X, y = random_dataset(10, 2, seed=23)
        model = solve_interpolation(X, y, 1.5)
        probe = np.array([0.41, 0.62])
        direct = pointwise_posterior(X, y, 1.5, probe)
        cached = pointwise_posterior(None, None, 1.5, probe, model=model)
        assert direct.mean == cached.mean
        assert direct.scale == cached.scale
        assert direct.dof == cached.dof


class TestSamplePaths:
    def test_deterministic_per_seed(self):
        X, y = random_dataset(7, 1, seed=29)
        grid = np.linspace(0.0, 1.0, 25)[:, None]
        p1 = draw_sample_path(X, y, 1.5, grid, seed=101)
        p2 = draw_sample_path(X, y, 1.5, grid, seed=101)
        p3 = draw_sample_path(X, y, 1.5, grid, seed=102)
        np.testing.assert_array_equal(p1, p2)
        assert not np.array_equal(p1, p3)

    def test_passes_through_data(self):
        X = np.array([[0.1], [0.5], [0.9]])
        y = np.array([1.0, -1.0, 0.5])
        grid = np.concatenate([np.linspace(0.0, 1.0, 11)[:, None], X])
        path = draw_sample_path(X, y, 0.5, grid, seed=7)
        np.testing.assert_allclose(path[-3:], y, atol=1e-9)
        assert path[5] == pytest.approx(-1.0, abs=1e-9)  # grid point 0.5 is a datapoint

    def test_wiggles_between_data(self):
        # With dof = 2 tails the path should not equal the mean off the data.
        X, y = random_dataset(5, 1, seed=31)
        grid = np.linspace(0.0, 1.0, 15)[:, None]
        model = solve_interpolation(X, y, 0.5)
        path = draw_sample_path(X, y, 0.5, grid, seed=3)
        assert np.abs(path - model.evaluate(grid)).max() > 1e-6
