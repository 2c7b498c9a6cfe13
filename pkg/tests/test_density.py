import math

import numpy as np
import pytest
from scipy import integrate

from sklandscape.density import (
    MAX_GRID_POINTS,
    default_extent,
    default_grid_step,
    grid_integral,
    halfnormal_sum_density,
    tilt_schedule,
)
from sklandscape.errors import ResourceError
from sklandscape.gaussian import HALFNORMAL_MEAN, HALFNORMAL_VAR, std_normal_pdf


def two_fold(s):
    # explicit convolution of two half-normal densities
    val, _ = integrate.quad(lambda t: 4 * std_normal_pdf(t) * std_normal_pdf(s - t), 0.0, s,
                            epsabs=1e-15, epsrel=1e-13)
    return val


class TestSmallN:
    def test_one_is_half_normal(self):
        d = halfnormal_sum_density(1)
        assert np.max(np.abs(d.density() - 2 * std_normal_pdf(d.grid))) <= 1e-10

    def test_two_against_quadrature(self):
        d = halfnormal_sum_density(2)
        s = d.grid
        idx = np.arange(0, d.size, 7)
        err = max(abs(d.density()[i] - two_fold(s[i])) for i in idx)
        assert err <= 1e-8

    def test_sixteen_mean(self):
        d = halfnormal_sum_density(16)
        assert d.mean() == pytest.approx(16 * HALFNORMAL_MEAN, rel=1e-6)


class TestInvariants:
    @pytest.mark.parametrize("n", [1, 2, 3, 5, 16, 64, 100, 256, 1024])
    def test_mass_mean_variance(self, n):
        d = halfnormal_sum_density(n)
        assert abs(d.total_mass() - 1) <= 1e-8
        assert d.mean() == pytest.approx(n * HALFNORMAL_MEAN, rel=1e-6)
        assert d.variance() == pytest.approx(n * HALFNORMAL_VAR, rel=1e-4)

    def test_support(self):
        d = halfnormal_sum_density(64)
        assert d.grid_start == 0.0
        assert d.grid_end >= default_extent(64)

    def test_extended_support(self):
        d = halfnormal_sum_density(64, s_max=150.0)
        assert d.grid_end >= 150.0
        assert abs(d.total_mass() - 1) <= 1e-8

    def test_far_tail_against_chernoff(self):
        # log P{S >= n x} <= -n mu*(x) and matches it to leading order
        from sklandscape.rate import mu_star
        n = 64
        d = halfnormal_sum_density(n, s_max=2.5 * n)
        lt = d.log_integral(lower=2.0 * n)
        assert lt <= -n * mu_star(2.0)
        assert lt >= -n * mu_star(2.0) - 3 * math.log(n)

    def test_immutable(self):
        d = halfnormal_sum_density(4)
        with pytest.raises(ValueError):
            d.log_density[0] = 0.0

    def test_raw_close_to_rich(self):
        d = halfnormal_sum_density(32)
        assert abs(d.log_integral(raw=True)) <= 1e-5


class TestGuards:
    def test_default_step_within_limit(self):
        for n in (1, 4, 25, 64, 65, 1000):
            assert 0 < default_grid_step(n) <= min(0.01 * math.sqrt(n), 0.05)

    @pytest.mark.parametrize("step", [0.0, -0.01, 0.2])
    def test_bad_step(self, step):
        with pytest.raises(ValueError):
            halfnormal_sum_density(4, step)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            halfnormal_sum_density(0)

    def test_grid_guard(self):
        n = 10 ** 6
        assert (default_extent(n) / 1e-4) * 2 > MAX_GRID_POINTS
        with pytest.raises(ResourceError):
            halfnormal_sum_density(n, 1e-4)


class TestGridIntegral:
    def test_exact_for_smooth(self):
        h = 0.01
        x = h * np.arange(1001)
        z = np.exp(-x) * np.cos(3 * x)
        exact = (1 - math.exp(-10) * (math.cos(30) - 3 * math.sin(30))) / 10
        assert grid_integral(z, h) == pytest.approx(exact, abs=1e-13)

    def test_off_grid_bounds(self):
        h = 0.01
        x = h * np.arange(1001)
        z = np.exp(-x)
        assert grid_integral(z, h, 0.123456, 7.654321) == pytest.approx(
            math.exp(-0.123456) - math.exp(-7.654321), abs=1e-13)

    def test_empty_range(self):
        assert grid_integral(np.ones(100), 0.1, 5.0, 5.0) == 0.0


def test_tilts_cover_the_grid():
    from sklandscape.gaussian import mills_ratio
    n = 256
    lams = tilt_schedule(n, 400.0)
    assert lams == sorted(lams)
    assert 0.0 in lams
    centres = [n * (lam + mills_ratio(lam)) for lam in lams]
    assert centres[-1] >= 400.0
    assert centres[0] <= n * HALFNORMAL_MEAN - 12 * math.sqrt(n * HALFNORMAL_VAR)
