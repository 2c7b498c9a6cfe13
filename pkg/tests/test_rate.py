import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from sklandscape.errors import DomainError
from sklandscape.gaussian import mills_ratio, phi
from sklandscape.rate import (
    X_MIN,
    R,
    R_c,
    critical_constants,
    lambda_star,
    lambda_star_derivative_check,
    mu_star,
    rate_point,
    rate_table,
    theta_ratio,
)

xs = st.floats(min_value=X_MIN, max_value=6.0, allow_nan=False)


def grid_sup(x, hi=10.0, step=1e-4):
    lam = np.arange(0.0, hi + step / 2, step)
    return float(np.max(lam * x - 0.5 * lam ** 2 - phi(lam)))


def x_grid(step=0.01, hi=4.0):
    return np.arange(X_MIN + 0.01, hi + 1e-12, step)


class TestLambdaStar:
    def test_left_end(self):
        assert lambda_star(X_MIN) == 0.0

    def test_at_v_star(self):
        cc = critical_constants()
        assert lambda_star(cc.v_star) == pytest.approx(cc.v_star / 2, abs=1e-10)

    def test_x_two_against_bisection(self):
        ref = optimize.bisect(lambda lam: lam + mills_ratio(lam) - 2.0, 0.0, 2.0, xtol=1e-15)
        assert lambda_star(2.0) == pytest.approx(ref, abs=1e-12)
        lam = lambda_star(2.0)
        assert abs(lam + mills_ratio(lam) - 2.0) <= 1e-12

    @given(xs)
    def test_residual(self, x):
        lam = lambda_star(x)
        assert lam >= 0
        assert abs(lam + mills_ratio(lam) - x) <= 1e-10 * max(1.0, x)

    def test_domain(self):
        with pytest.raises(DomainError):
            lambda_star(0.7)
        assert lambda_star(X_MIN - 1e-13) == 0.0


class TestMuStar:
    def test_zero_at_mean(self):
        assert mu_star(X_MIN) == 0.0

    def test_grid_supremum(self):
        assert mu_star(1.5) == pytest.approx(grid_sup(1.5), abs=1e-8)

    @pytest.mark.parametrize("x", [0.9, 1.2, 2.0, 3.5])
    def test_grid_supremum_more(self, x):
        assert abs(mu_star(x) - grid_sup(x)) <= 1e-8

    @pytest.mark.parametrize("d", [0.3, -0.3])
    def test_concavity_gap(self, d):
        x = 1.2
        lam = lambda_star(x) + d
        gap = mu_star(x) - (lam * x - lam ** 2 / 2 - phi(lam))
        assert 0.3 ** 2 / 40 <= gap <= 0.3 ** 2 / 2

    @given(xs, xs)
    def test_nondecreasing(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert mu_star(lo) <= mu_star(hi) + 1e-15

    def test_convex_on_grid(self):
        h = 1e-3
        for x in x_grid(0.05):
            assert mu_star(x + h) - 2 * mu_star(x) + mu_star(x - h) >= -1e-12

    def test_duality(self):
        h = 1e-6
        for x in x_grid():
            fd = (mu_star(x + h) - mu_star(x - h)) / (2 * h)
            assert abs(fd - lambda_star(x)) <= 1e-5

    def test_domain(self):
        with pytest.raises(DomainError):
            mu_star(0.5)


class TestR:
    def test_left_end(self):
        assert R(X_MIN) == pytest.approx(1 / (2 * math.pi), abs=1e-15)
        assert R(X_MIN) == pytest.approx(0.15915, abs=1e-5)

    def test_at_v_star(self):
        cc = critical_constants()
        assert R(cc.v_star) == pytest.approx(cc.alpha_star, abs=1e-14)
        assert R(cc.v_star) == pytest.approx(0.199, abs=1e-3)

    @given(xs, st.floats(min_value=0.5, max_value=1.0))
    def test_sandwich(self, x, c):
        r = R_c(x, c)
        assert R(x) <= r <= R(x) + (2 * c - 1) * x * x / 4 + 1e-12

    def test_half_has_no_slack(self):
        assert R_c(1.3, 0.5) == R(1.3)

    def test_bad_c(self):
        with pytest.raises(DomainError):
            R_c(1.0, 0.4)

    def test_second_derivative_range(self):
        h = 1e-3
        for x in x_grid(0.02):
            d2 = (R(x + h) - 2 * R(x) + R(x - h)) / h ** 2
            assert -20.0 <= d2 <= -0.5 + 1e-3

    def test_unique_maximum(self):
        v = critical_constants().v_star
        grid = np.arange(X_MIN, 4.0, 1e-3)
        vals = np.array([R(x) for x in grid])
        left, right = vals[grid < v], vals[grid > v]
        assert np.all(np.diff(left) > 0)
        assert np.all(np.diff(right) < 0)


class TestCriticalConstants:
    def test_values(self):
        cc = critical_constants()
        assert cc.half_v_star == pytest.approx(0.506, abs=1e-3)
        assert cc.alpha_star == pytest.approx(0.199, abs=1e-3)
        assert cc.exponent == pytest.approx(cc.alpha_star - math.log(2), abs=1e-15)

    def test_bracket(self):
        cc = critical_constants()
        assert 1 / (2 * math.pi) < cc.alpha_star < 2 / (3 * math.pi)
        assert cc.v_star > X_MIN

    def test_stationarity(self):
        cc = critical_constants()
        assert cc.stationarity_residual <= 1e-12
        assert abs(cc.lambda_at_vstar - cc.v_star / 2) <= 1e-10

    def test_is_argmax(self):
        cc = critical_constants()
        res = optimize.minimize_scalar(lambda x: -R(x), bounds=(0.9, 1.2), method="bounded",
                                       options={"xatol": 1e-10})
        assert res.x == pytest.approx(cc.v_star, abs=1e-6)


class TestTheta:
    @pytest.mark.parametrize("x", [X_MIN, 3.0])
    def test_stated_interval(self, x):
        assert 0.25 <= theta_ratio(x) <= 10.0

    def test_grid(self):
        v = critical_constants().v_star
        for x in np.arange(X_MIN, 4.0, 0.01):
            if abs(x - v) >= 1e-3:
                assert 0.25 <= theta_ratio(x) <= 10.0

    def test_near_v_star_matches_curvature(self):
        v = critical_constants().v_star
        h = 1e-3
        d2 = (R(v + h) - 2 * R(v) + R(v - h)) / h ** 2
        assert theta_ratio(v + 1e-3) == pytest.approx(-d2 / 2, rel=1e-2)
        assert 0.25 <= -d2 / 2 <= 10.0

    def test_rejects_v_star(self):
        with pytest.raises(DomainError):
            theta_ratio(critical_constants().v_star)


class TestDerivativeCheck:
    def test_points(self):
        v = critical_constants().v_star
        rep = lambda_star_derivative_check([X_MIN + 0.01, v])
        assert rep.holds
        assert all(1.0 <= d <= 20.0 for d in rep.fd_derivative)

    def test_grid_and_analytic(self):
        rep = lambda_star_derivative_check(x_grid(0.05))
        assert rep.holds
        assert rep.max_analytic_gap <= 1e-4

    def test_domain(self):
        with pytest.raises(DomainError):
            lambda_star_derivative_check([X_MIN])


class TestTable:
    def test_rows(self):
        v = critical_constants().v_star
        rows = rate_table([1.0, v, 1.5])
        assert [set(r) for r in rows][0] == {"x", "lambda_star", "mu_star", "R", "theta_ratio"}
        assert rows[1]["theta_ratio"] is None
        assert rows[0]["R"] == pytest.approx(R(1.0))

    def test_rate_point(self):
        p = rate_point(1.4)
        assert p.r_half == pytest.approx(1.4 ** 2 / 4 - p.mu_star)
        assert p.mu_star >= 0 and p.lambda_star >= 0

    @settings(max_examples=25)
    @given(xs)
    def test_rate_point_consistent(self, x):
        p = rate_point(x)
        assert p.mu_star == pytest.approx(mu_star(x), abs=1e-15)
