import math

import numpy as np
import pytest

from harness import (
    Box,
    HeightField,
    Kernel,
    ModelParams,
    build_gaussian,
    conditional_check,
    energy,
    log_density,
    sample_exact,
    solve_exact,
)

from conftest import random_field


@pytest.fixture
def small_spec(nn1d, params_half):
    rng = np.random.default_rng(53)
    box = Box((0,), (7,), 2)
    y = random_field(box.shell(2), rng)
    d = random_field(box.sites(), rng)
    return box, y, d, build_gaussian(box, y, d, params_half, nn1d)


class TestBuildGaussian:
    def test_one_site(self, nn1d, params_half):
        box = Box((0,), (0,), 2)
        spec = build_gaussian(box, HeightField.zeros(box.shell(2)),
                              HeightField({(0,): 2.0}), params_half, nn1d)
        assert spec.mean[0] == pytest.approx(1.0, abs=1e-14)
        assert spec.covariance[0, 0] == pytest.approx(0.5, abs=1e-14)

    def test_two_site_covariance(self, nn1d, params_half):
        box = Box((0,), (1,), 2)
        spec = build_gaussian(box, HeightField.zeros(box.shell(2)),
                              HeightField.zeros(box.sites()), params_half, nn1d)
        expected = np.array([[8.0, 2.0], [2.0, 8.0]]) / 15.0
        assert np.allclose(spec.covariance, expected, atol=1e-14)

    def test_beta_scaling_of_covariance(self, nn1d):
        box = Box((0,), (3,), 2)
        y = HeightField.zeros(box.shell(2))
        d = HeightField.constant(box.sites(), 1.0)
        spec1 = build_gaussian(box, y, d, ModelParams(0.5, 0.5), nn1d)
        spec2 = build_gaussian(box, y, d, ModelParams(0.5, 0.25), nn1d)
        assert np.allclose(spec2.covariance, spec1.covariance / 2.0, atol=1e-14)
        assert np.allclose(spec2.mean, spec1.mean, atol=1e-14)

    def test_mean_matches_exact_solve(self, small_spec, nn1d, params_half):
        box, y, d, spec = small_spec
        m = solve_exact(box, d, y, params_half, nn1d).m
        assert np.max(np.abs(spec.mean - m.vector(box.sites()))) <= 1e-9

    def test_covariance_symmetric(self, small_spec):
        _, _, _, spec = small_spec
        assert np.array_equal(spec.covariance, spec.covariance.T)
        assert np.all(np.diag(spec.covariance) > 0)


class TestLogDensity:
    def test_mode_is_maximal(self, small_spec):
        box, _, _, spec = small_spec
        rng = np.random.default_rng(59)
        at_mode = log_density(spec, HeightField.from_vector(spec.sites, spec.mean))
        for _ in range(20):
            probe = spec.mean + rng.uniform(-1, 1, spec.n)
            assert log_density(spec, HeightField.from_vector(spec.sites, probe)) < at_mode

    def test_reflection_symmetry(self, small_spec):
        _, _, _, spec = small_spec
        rng = np.random.default_rng(61)
        v = rng.uniform(-1, 1, spec.n)
        plus = log_density(spec, HeightField.from_vector(spec.sites, spec.mean + v))
        minus = log_density(spec, HeightField.from_vector(spec.sites, spec.mean - v))
        assert plus == pytest.approx(minus, abs=1e-10)

    def test_difference_matches_energy(self, small_spec, nn1d, params_half):
        box, y, d, spec = small_spec
        rng = np.random.default_rng(67)
        for _ in range(10):
            x1 = HeightField.from_vector(spec.sites, rng.uniform(-2, 2, spec.n))
            x2 = HeightField.from_vector(spec.sites, rng.uniform(-2, 2, spec.n))
            log_diff = log_density(spec, x1) - log_density(spec, x2)
            en_diff = (energy(box, x1, y, d, params_half, nn1d).total
                       - energy(box, x2, y, d, params_half, nn1d).total)
            assert log_diff == pytest.approx(-en_diff / (2 * params_half.sigma2), abs=1e-9)


class TestSampleExact:
    def test_deterministic(self, small_spec):
        _, _, _, spec = small_spec
        assert np.array_equal(sample_exact(spec, 100, seed=3), sample_exact(spec, 100, seed=3))

    def test_moments(self, small_spec):
        _, _, _, spec = small_spec
        n = 20_000
        draws = sample_exact(spec, n, seed=101)
        se_mean = np.sqrt(np.diag(spec.covariance) / n)
        assert np.all(np.abs(draws.mean(axis=0) - spec.mean) <= 5 * se_mean)
        cov_hat = np.cov(draws.T, ddof=1)
        var = np.diag(spec.covariance)
        se_cov = np.sqrt((np.outer(var, var) + spec.covariance ** 2) / n)
        assert np.all(np.abs(cov_hat - spec.covariance) <= 5 * se_cov)


class TestConditionalCheck:
    def test_interior_and_boundary_sites(self, small_spec, nn1d, params_half):
        box, y, d, spec = small_spec
        rng = np.random.default_rng(71)
        for _ in range(25):
            x = HeightField.from_vector(spec.sites, rng.uniform(-2, 2, spec.n))
            for k in [(3,), (0,), (7,)]:
                resid = conditional_check(spec, k, x, params_half, nn1d, d, y)
                assert resid <= 1e-9
                resid_cached = conditional_check(spec, k, x, params_half, nn1d, d)
                assert resid_cached <= 1e-9

    def test_asymmetric_kernel_breaks_identity(self, params_half):
        # direct construction bypasses validation on purpose
        bad = Kernel({(-1,): 0.3, (1,): 0.7}, 2)
        box = Box((0,), (5,), 2)
        rng = np.random.default_rng(73)
        y = random_field(box.shell(2), rng)
        d = random_field(box.sites(), rng)
        spec = build_gaussian(box, y, d, params_half, bad)
        x = HeightField.from_vector(spec.sites, rng.uniform(-2, 2, spec.n))
        worst = max(conditional_check(spec, k, x, params_half, bad, d, y)
                    for k in box.sites())
        assert worst > 1e-6


class TestThermodynamicCoupling:
    def test_center_statistics_converge(self, nn1d, params_half):
        d_data = HeightField({(0,): 1.0})
        means, variances = [], []
        for half in (2, 4, 8, 16):
            box = Box((-half,), (half,), 2)
            d = HeightField({s: d_data.get(s, 0.0) for s in box.sites()})
            y = HeightField.constant(box.shell(2), 5.0)
            spec = build_gaussian(box, y, d, params_half, nn1d)
            ci = box.sites().index((0,))
            means.append(spec.mean[ci])
            variances.append(spec.covariance[ci, ci])
        mean_gaps = [abs(b - a) for a, b in zip(means, means[1:])]
        var_gaps = [abs(b - a) for a, b in zip(variances, variances[1:])]
        assert all(b < a for a, b in zip(mean_gaps, mean_gaps[1:]))
        assert all(b < a + 1e-15 for a, b in zip(var_gaps, var_gaps[1:]))
        assert mean_gaps[-1] < 1e-3 and var_gaps[-1] < 1e-3
