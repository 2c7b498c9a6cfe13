"""Legendre transform of the half-normal log-MGF and its critical point.

For ``x >= sqrt(2/pi)`` the rate function of ``|N_1| + ... + |N_n|`` is

    mu*(x) = sup_{lam >= 0} lam x - lam**2/2 - phi(lam),

attained at the root ``lam*(x)`` of ``lam + phi'(lam) = x``.  The
Laplace exponent ``R(x) = x**2/4 - mu*(x)`` is strictly concave with a
unique maximiser ``v*``; its value ``alpha*`` is the growth rate of the
expected number of local optima (times ``2**-n``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError
from .gaussian import (
    HALFNORMAL_MEAN,
    LOG2,
    log_std_normal_cdf,
    mills_ratio,
    phi,
    phi_double_prime,
    std_normal_cdf,
    std_normal_pdf,
)

X_MIN = HALFNORMAL_MEAN
_DOMAIN_SLACK = 1e-12
_RESIDUAL_TOL = 1e-13


def _check_x(x: float) -> float:
    x = float(x)
    if not math.isfinite(x) or x < X_MIN - _DOMAIN_SLACK:
        raise DomainError(f"x = {x!r} lies below sqrt(2/pi) = {X_MIN!r}")
    return max(x, X_MIN)


def _safeguarded_newton(fun, dfun, lo: float, hi: float, x0: float, tol: float,
                        max_iter: int = 200) -> float:
    """Root of an increasing function bracketed by [lo, hi].

    Newton steps that leave the bracket fall back to bisection.
    """
    x = min(max(x0, lo), hi)
    for _ in range(max_iter):
        fx = fun(x)
        if abs(fx) <= tol:
            return x
        if fx > 0:
            hi = x
        else:
            lo = x
        d = dfun(x)
        step = x - fx / d if d > 0 else math.nan
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == x or hi - lo <= 4e-16 * max(1.0, abs(x)):
            return step
        x = step
    return x


def lambda_star(x: float) -> float:
    """Tilt attaining the Legendre supremum at ``x``."""
    x = _check_x(x)
    if x == X_MIN:
        return 0.0

    def gap(lam):
        return lam + mills_ratio(lam) - x

    def dgap(lam):
        return 1.0 + phi_double_prime(lam)

    # lam <= lam + phi'(lam) <= lam + sqrt(2/pi)
    lo = max(0.0, x - X_MIN)
    return _safeguarded_newton(gap, dgap, lo, x, x - X_MIN * 0.5,
                               _RESIDUAL_TOL * max(1.0, x))


def mu_star(x: float) -> float:
    """Cramer rate function of the half-normal mean."""
    x = _check_x(x)
    lam = lambda_star(x)
    return max(lam * x - 0.5 * lam * lam - phi(lam), 0.0)


def R_c(x: float, c: float) -> float:
    """``c x**2 / 2 - mu*(x)`` for ``c`` in [1/2, 1]."""
    if not 0.5 <= c <= 1.0:
        raise DomainError(f"c = {c!r} outside [1/2, 1]")
    x = _check_x(x)
    m = mu_star(x)
    r = 0.5 * c * x * x - m
    r_half = 0.25 * x * x - m
    # holds by construction; cheap guard against future edits
    tol = 1e-14 * max(1.0, x * x)
    assert r_half - tol <= r <= r_half + (2.0 * c - 1.0) * 0.25 * x * x + tol
    return r


def R(x: float) -> float:
    return R_c(x, 0.5)


@dataclass(frozen=True)
class RatePoint:
    x: float
    lambda_star: float
    mu_star: float
    r_half: float


def rate_point(x: float) -> RatePoint:
    x = _check_x(x)
    lam = lambda_star(x)
    m = max(lam * x - 0.5 * lam * lam - phi(lam), 0.0)
    return RatePoint(x=x, lambda_star=lam, mu_star=m, r_half=0.25 * x * x - m)


@dataclass(frozen=True)
class CriticalConstants:
    v_star: float
    alpha_star: float
    lambda_at_vstar: float
    exponent: float
    stationarity_residual: float

    @property
    def half_v_star(self) -> float:
        return 0.5 * self.v_star

    def to_dict(self) -> dict:
        d = asdict(self)
        d["half_v_star"] = self.half_v_star
        return d


@lru_cache(maxsize=None)
def critical_constants() -> CriticalConstants:
    """Maximiser and maximum of ``R``.

    Stationarity ``lam*(x) = x/2`` reduces to ``f(lam) = lam Phi(lam)``
    with ``lam = v*/2``; the gap ``f - lam Phi`` is strictly decreasing.
    """

    def gap(lam):
        return lam * std_normal_cdf(lam) - std_normal_pdf(lam)

    def dgap(lam):
        return std_normal_cdf(lam) + 2.0 * lam * std_normal_pdf(lam)

    lam = _safeguarded_newton(gap, dgap, 0.3, 0.8, 0.5, 1e-15)
    v = 2.0 * lam
    # R(v*) = lam**2 - mu*(2 lam) with lam*(2 lam) = lam
    alpha = -0.5 * lam * lam + LOG2 + log_std_normal_cdf(lam)
    return CriticalConstants(
        v_star=v,
        alpha_star=alpha,
        lambda_at_vstar=lambda_star(v),
        exponent=alpha - LOG2,
        stationarity_residual=abs(gap(lam)),
    )


def theta_ratio(x: float) -> float:
    """``(alpha* - R(x)) / (x - v*)**2``; undefined at ``v*`` itself."""
    x = _check_x(x)
    cc = critical_constants()
    d = x - cc.v_star
    if abs(d) < 1e-6:
        raise DomainError(f"theta_ratio is 0/0 at x = {x!r} (too close to v*)")
    return (cc.alpha_star - R(x)) / (d * d)


@dataclass(frozen=True)
class DerivativeReport:
    x: list
    fd_derivative: list
    analytic_derivative: list
    min_value: float
    max_value: float
    max_analytic_gap: float
    holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def lambda_star_derivative_check(x_grid, h: float = 1e-5) -> DerivativeReport:
    """Finite-difference ``lam*'`` on a grid, checked against [1, 20].

    Also compared with the implicit-function value ``1 / (1 + phi''(lam*))``.
    """
    xs = [float(x) for x in x_grid]
    if any(x < X_MIN + h for x in xs):
        raise DomainError("every grid point must satisfy x >= sqrt(2/pi) + h")
    fd = [(lambda_star(x + h) - lambda_star(x - h)) / (2.0 * h) for x in xs]
    an = [1.0 / (1.0 + phi_double_prime(lambda_star(x))) for x in xs]
    lo, hi = min(fd), max(fd)
    gap = max(abs(a - b) for a, b in zip(fd, an))
    return DerivativeReport(
        x=xs,
        fd_derivative=fd,
        analytic_derivative=an,
        min_value=lo,
        max_value=hi,
        max_analytic_gap=gap,
        holds=bool(lo >= 1.0 - 1e-3 and hi <= 20.0 + 1e-3),
    )


def rate_table(x_grid) -> list[dict]:
    """Rows ``x, lambda_star, mu_star, R, theta_ratio`` (None near v*)."""
    cc = critical_constants()
    rows = []
    for x in x_grid:
        p = rate_point(x)
        theta = None
        if abs(p.x - cc.v_star) >= 1e-6:
            theta = (cc.alpha_star - p.r_half) / (p.x - cc.v_star) ** 2
        rows.append({"x": p.x, "lambda_star": p.lambda_star, "mu_star": p.mu_star,
                     "R": p.r_half, "theta_ratio": theta})
    return rows


def mu_star_array(xs) -> np.ndarray:
    return np.array([mu_star(x) for x in np.atleast_1d(xs)])
