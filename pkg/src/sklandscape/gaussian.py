"""Scalar Gaussian primitives.

Everything here accepts floats or numpy arrays.  The CDF goes through
``scipy.special.ndtr`` (erfc based) and the log-CDF through ``log_ndtr``,
which stays accurate far into the lower tail where ``n * log Phi`` is
needed without underflow.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

SQRT_2PI = math.sqrt(2.0 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# E|N(0,1)|, the left end of the rate-function domain
HALFNORMAL_MEAN = math.sqrt(2.0 / math.pi)
HALFNORMAL_VAR = 1.0 - 2.0 / math.pi
LOG2 = math.log(2.0)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def std_normal_pdf(lam):
    """Standard normal density ``exp(-lam**2 / 2) / sqrt(2 pi)``."""
    lam = np.asarray(lam, dtype=float)
    return _out(np.exp(-0.5 * lam * lam) / SQRT_2PI)


def log_std_normal_pdf(lam):
    lam = np.asarray(lam, dtype=float)
    return _out(-0.5 * lam * lam - LOG_SQRT_2PI)


def std_normal_cdf(lam):
    """Standard normal CDF."""
    return _out(special.ndtr(np.asarray(lam, dtype=float)))


def log_std_normal_cdf(lam):
    """``log Phi(lam)``, accurate for very negative arguments."""
    return _out(special.log_ndtr(np.asarray(lam, dtype=float)))


def mills_ratio(lam):
    """``f(lam) / Phi(lam)``, evaluated in log space."""
    lam = np.asarray(lam, dtype=float)
    return _out(np.exp(-0.5 * lam * lam - LOG_SQRT_2PI - special.log_ndtr(lam)))


def phi(lam):
    """``log(2 Phi(lam))``; zero at the origin, concave and increasing."""
    return _out(LOG2 + special.log_ndtr(np.asarray(lam, dtype=float)))


def phi_prime(lam):
    return mills_ratio(lam)


def phi_double_prime(lam):
    """``-lam r - r**2`` with ``r = f / Phi``; lies in (-1, 0)."""
    lam = np.asarray(lam, dtype=float)
    r = np.asarray(mills_ratio(lam))
    return _out(-lam * r - r * r)


def log_halfnormal_mgf(lam):
    """``log E exp(lam |N|) = lam**2 / 2 + phi(lam)``.

    Valid for every real ``lam``; callers in this package use ``lam >= 0``
    except for the left-side tilts of the convolution grid.
    """
    lam = np.asarray(lam, dtype=float)
    return _out(0.5 * lam * lam + np.asarray(phi(lam)))


def halfnormal_mgf(lam):
    """Moment generating function of ``|N(0,1)|``."""
    return _out(np.exp(np.asarray(log_halfnormal_mgf(lam))))


def appendix_g(lam):
    """``(f/Phi)(lam) * (lam + (f/Phi)(lam))``, i.e. ``-phi''(lam)``."""
    lam = np.asarray(lam, dtype=float)
    r = np.asarray(mills_ratio(lam))
    return _out(r * (lam + r))


@dataclass(frozen=True)
class AppendixBoundReport:
    sup_value: float
    argmax: float
    holds: bool
    grid_step: float
    tail_bound: float
    lambda1: float
    lambda2: float
    interval_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


BOUND = 0.95
_GRID_END = 50.0


def verify_appendix_bound(grid_step: float = 1e-3) -> AppendixBoundReport:
    """Check ``sup_{lam >= 0} -phi''(lam) < 0.95``.

    Dense grid on [0, 50]; beyond 50 the quantity is dominated by
    ``2 lam f(lam) + 2 f(lam)**2``, which is decreasing there, so its value
    at 50 bounds the whole tail.
    """
    if not grid_step > 0 or grid_step > 0.01:
        raise ValueError(f"grid_step must lie in (0, 0.01], got {grid_step!r}")
    m = int(round(_GRID_END / grid_step))
    grid = np.linspace(0.0, m * grid_step, m + 1)
    g = np.asarray(appendix_g(grid))
    k = int(np.argmax(g))
    f50 = std_normal_pdf(_GRID_END)
    tail = 2.0 * _GRID_END * f50 + 2.0 * f50 * f50

    lam1 = (BOUND - 2.0 / math.pi) / HALFNORMAL_MEAN
    lam2 = math.sqrt(math.log((2.0 / math.pi) / (BOUND - math.sqrt(2.0 / (math.pi * math.e)))))
    interval = 2.0 * lam2 * std_normal_pdf(lam2) + 4.0 * std_normal_pdf(lam1) ** 2
    return AppendixBoundReport(
        sup_value=float(g[k]),
        argmax=float(grid[k]),
        holds=bool(g[k] < BOUND and tail < BOUND),
        grid_step=grid_step,
        tail_bound=float(tail),
        lambda1=lam1,
        lambda2=lam2,
        interval_bound=float(interval),
    )
