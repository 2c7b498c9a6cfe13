"""Probability that a configuration is a local minimum, and what follows from it.

The local fields ``Z`` of a fixed configuration form a centred Gaussian
vector with covariance ``(n-2) I + 1 1^T``, so ``Z = sqrt(n-2) X + g 1``
and the orthant probability is the one-dimensional integral

    P(n) = int f(g) Phi(g / sqrt(n-2))^n dg.

Equivalently ``P(n) = 2^-n sqrt((n-2)/(2n-2)) E exp(S^2 / (4(n-1)))``
with ``S = |N_1| + ... + |N_n|``; the exponential moment, its truncations,
tails and the conditional energy law are evaluated on a ``GridDensity``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtri

from .density import GridDensity, default_grid_step, halfnormal_sum_density
from .errors import DomainError, ResourceError
from .gaussian import LOG2, log_halfnormal_mgf, log_std_normal_cdf, log_std_normal_pdf
from .rate import X_MIN, critical_constants, lambda_star, mu_star

METHODS = ("orthant-quadrature", "convolution", "tilted-mc", "naive-mc", "brute-force")
BLOCK = 2 ** 14
# normals drawn by one Monte Carlo call
MC_BUDGET = 2 * 10 ** 10
# the exponential-moment integrand is kept until it is this far below its peak
_MOMENT_DROP = 50.0
_QUAD_DROP = math.log(1e18)


@dataclass
class EstimateWithError:
    """A number with its method and an error bound or standard error.

    ``error`` refers to ``value`` when that is set and to ``log_value``
    otherwise.
    """

    method: str
    error: float
    value: float | None = None
    log_value: float | None = None
    n_samples: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.error >= 0:
            raise ValueError(f"error must be >= 0, got {self.error!r}")
        if self.n_samples is not None and self.n_samples < 1:
            raise ValueError("Monte Carlo estimates need n_samples >= 1")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _check_n(n, least=3) -> int:
    if int(n) != n or n < least:
        raise DomainError(f"need integer n >= {least}, got {n!r}")
    return int(n)


# --- orthant quadrature --------------------------------------------------------

def _orthant_log_integrand(n):
    scale = 1.0 / math.sqrt(n - 2)

    def log_f(g):
        return log_std_normal_pdf(g) + n * log_std_normal_cdf(g * scale)

    return log_f


@lru_cache(maxsize=None)
def _orthant(n: int):
    log_f = _orthant_log_integrand(n)
    # log f + n log Phi is concave, so the peak is a bounded 1-d maximum
    peak = optimize.minimize_scalar(lambda g: -log_f(g), bounds=(-12.0, 12.0 + 2.0 * math.sqrt(n)),
                                    method="bounded", options={"xatol": 1e-10}).x
    top = log_f(peak)
    lo, hi = min(-12.0, peak - 12.0), max(12.0, peak + 12.0)
    while log_f(lo) > top - _QUAD_DROP:
        lo -= 4.0
    while log_f(hi) > top - _QUAD_DROP:
        hi += 4.0

    def w(g):
        return math.exp(log_f(g) - top)

    total, err = 0.0, 0.0
    for a, b in ((lo, peak), (peak, hi)):
        v, e = integrate.quad(w, a, b, epsabs=0.0, epsrel=1e-12, limit=400)
        total += v
        err += e
    return top + math.log(total), err / total, (lo, hi)


def local_opt_probability(n: int) -> EstimateWithError:
    """``P{sigma is a local minimum}`` for any fixed configuration of ``n`` spins."""
    if int(n) != n or n < 2:
        raise DomainError(f"need integer n >= 2, got {n!r}")
    n = int(n)
    if n == 2:
        # Z_1 = Z_2 = -sigma_1 sigma_2 W_12: a fair sign
        return EstimateWithError(method="orthant-quadrature", value=0.5, log_value=-LOG2,
                                 error=0.0, meta={"n": 2, "closed_form": True})
    log_p, rel, (lo, hi) = _orthant(n)
    p = math.exp(log_p)
    return EstimateWithError(method="orthant-quadrature", value=p, log_value=log_p,
                             error=rel * p, meta={"n": n, "log_error": rel, "range": [lo, hi]})


@dataclass(frozen=True)
class ExpectedCount:
    n: int
    log_count: float
    log_count_over_n: float
    exponent_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def expected_count(n: int) -> ExpectedCount:
    """``log E[#local minima] = n log 2 + log P(n)`` and its gap to ``alpha*``."""
    n = _check_n(n)
    lc = n * LOG2 + local_opt_probability(n).log_value
    return ExpectedCount(n=n, log_count=lc, log_count_over_n=lc / n,
                         exponent_residual=lc / n - critical_constants().alpha_star)


def identity_offset(n: int) -> float:
    """``log P(n) - log E exp(S^2/(4(n-1)))``."""
    n = _check_n(n)
    return -n * LOG2 + 0.5 * math.log((n - 2) / (2.0 * n - 2.0))


# --- exponential moment on the grid -------------------------------------------

def moment_extent(n: int) -> float:
    """Grid end past which ``g(s) exp(s^2/(4(n-1)))`` is negligible.

    Uses the Chernoff proxy ``n^2 x^2 / (4(n-1)) - n mu*(x)`` for the log
    integrand at ``s = n x`` and keeps it until it falls ``_MOMENT_DROP``
    nats below its maximum.
    """
    n = _check_n(n)
    c = n * n / (4.0 * (n - 1))

    def proxy(x):
        return c * x * x - n * mu_star(x)

    res = optimize.minimize_scalar(lambda x: -proxy(x), bounds=(X_MIN, 4.0), method="bounded")
    x0, top = res.x, proxy(res.x)
    x1 = x0 + 1.0
    while proxy(x1) > top - _MOMENT_DROP:
        x1 += 1.0
    x_hi = optimize.brentq(lambda x: proxy(x) - top + _MOMENT_DROP, x0, x1)
    return n * x_hi + 3.0 * math.sqrt(n)


@lru_cache(maxsize=16)
def _moment_density(n: int, grid_step: float) -> GridDensity:
    return halfnormal_sum_density(n, grid_step, s_max=moment_extent(n))


def _step(n, grid_step):
    return default_grid_step(n) if grid_step is None else float(grid_step)


def _quad_weight(n):
    c = 1.0 / (4.0 * (n - 1))
    return lambda s: c * s * s


def _grid_log_moment(d: GridDensity, log_weight, lower=None, upper=None):
    rich = d.log_integral(log_weight, lower, upper)
    raw = d.log_integral(log_weight, lower, upper, raw=True)
    err = abs(rich - raw) if np.isfinite(rich) and np.isfinite(raw) else 0.0
    return rich, err


def exp_moment(n: int, method: str = "convolution", grid_step: float | None = None,
               samples: int = 2 ** 18, seed: int = 0, threads: int = 1) -> EstimateWithError:
    """``log E exp(S^2 / (4(n-1)))`` by grid convolution or tilted Monte Carlo."""
    n = _check_n(n)
    if method == "convolution":
        d = _moment_density(n, _step(n, grid_step))
        lv, err = _grid_log_moment(d, _quad_weight(n))
        return EstimateWithError(method="convolution", log_value=lv, error=err,
                                 meta={"n": n, "grid_step": d.grid_step, "grid_end": d.grid_end})
    if method == "tilted-mc":
        return _tilted_mc(n, samples, seed, threads)
    raise ValueError(f"unknown method {method!r}; expected convolution or tilted-mc")


def truncated_exp_moment(n: int, bound: float, side: str,
                         grid_step: float | None = None) -> EstimateWithError:
    """``log E[exp(S^2/(4(n-1))) 1{S <= bound}]`` (``side='below'``) or ``S >= bound``."""
    n = _check_n(n)
    if side not in ("below", "above"):
        raise ValueError(f"side must be 'below' or 'above', got {side!r}")
    bound = float(bound)
    if math.isnan(bound) or bound < 0:
        raise DomainError(f"bound must be >= 0, got {bound!r}")
    d = _moment_density(n, _step(n, grid_step))
    w = _quad_weight(n)
    if side == "above":
        if bound == 0.0:
            lv, err = _grid_log_moment(d, w)
        elif bound >= d.grid_end:
            lv, err = _far_tail_moment(n, bound, d.grid_step)
        else:
            lv, err = _grid_log_moment(d, w, lower=bound)
    else:
        if bound >= d.grid_end:
            lv, err = _grid_log_moment(d, w)
        else:
            lv, err = _grid_log_moment(d, w, upper=bound)
    return EstimateWithError(method="convolution", log_value=lv, error=err,
                             meta={"n": n, "bound": bound, "side": side})


def _far_tail_moment(n, bound, h):
    # beyond the moment grid: a dedicated grid that reaches past the bound
    d = halfnormal_sum_density(n, h, s_max=bound + _tail_margin(n, bound / n))
    return _grid_log_moment(d, _quad_weight(n), lower=bound)


# --- tails ---------------------------------------------------------------------

def _tail_margin(n, x):
    # log g decays at least at rate lam*(x) beyond s = n x, and is
    # Gaussian-like with variance <= n near the mean
    lam = lambda_star(max(x, X_MIN))
    return min(60.0 / lam if lam > 0 else math.inf, 15.0 * math.sqrt(n)) + 1.0


@dataclass
class TailReport:
    log_tail: EstimateWithError
    mu_star: float
    r_n: float

    def to_dict(self) -> dict:
        return {"log_tail": self.log_tail.to_dict(), "mu_star": self.mu_star, "r_n": self.r_n}


def tail_probability(n: int, x: float, grid_step: float | None = None) -> TailReport:
    """``log P{S >= n x}`` with ``r_n(x) = -log_tail / n - mu*(x)``."""
    n = _check_n(n, least=1)
    x = float(x)
    if not math.isfinite(x) or x < X_MIN - 1e-12:
        raise DomainError(f"x = {x!r} lies below sqrt(2/pi)")
    s0 = n * x
    d = halfnormal_sum_density(n, _step(n, grid_step), s_max=s0 + _tail_margin(n, x))
    lv, err = _grid_log_moment(d, None, lower=s0)
    m = mu_star(max(x, X_MIN))
    est = EstimateWithError(method="convolution", log_value=lv, error=err,
                            meta={"n": n, "x": x, "grid_step": d.grid_step})
    return TailReport(log_tail=est, mu_star=m, r_n=-lv / n - m)


# --- conditional energy law ----------------------------------------------------

def energy_bound(n: int, delta: float) -> float:
    """``S`` threshold equivalent to ``-H / n^{3/2} >= delta`` for a local minimum."""
    return 2.0 * delta * n ** 1.5 / math.sqrt(n - 2)


def conditional_energy_tail(n: int, delta: float, grid_step: float | None = None) -> EstimateWithError:
    """``P{-H(sigma)/n^{3/2} >= delta | sigma is a local minimum}``.

    On the event of local optimality ``-H = sum(Z)/2``, which under the
    change of variables becomes ``sqrt(n-2) S / 2`` with ``S`` reweighted
    by ``exp(S^2/(4(n-1)))``.
    """
    n = _check_n(n)
    delta = float(delta)
    if math.isnan(delta) or delta < 0:
        raise DomainError(f"delta must be >= 0, got {delta!r}")
    full = exp_moment(n, grid_step=grid_step)
    if delta == 0.0:
        return EstimateWithError(method="convolution", value=1.0, error=0.0,
                                 meta={"n": n, "delta": 0.0, "bound": 0.0})
    part = truncated_exp_moment(n, energy_bound(n, delta), "above", grid_step)
    ratio = min(math.exp(part.log_value - full.log_value), 1.0)
    err = ratio * (part.error + full.error)
    return EstimateWithError(method="convolution", value=ratio, error=err,
                             meta={"n": n, "delta": delta, "bound": energy_bound(n, delta),
                                   "log_value": part.log_value - full.log_value})


def conditional_energy_mean(n: int, grid_step: float | None = None) -> EstimateWithError:
    """``E[-H(sigma)/n^{3/2} | sigma is a local minimum]``."""
    n = _check_n(n)
    d = _moment_density(n, _step(n, grid_step))
    w = _quad_weight(n)

    def sw(s):
        with np.errstate(divide="ignore"):
            return w(s) + np.log(s)

    num, e1 = _grid_log_moment(d, sw)
    den, e2 = _grid_log_moment(d, w)
    scale = math.sqrt(n - 2) / (2.0 * n ** 1.5)
    value = scale * math.exp(num - den)
    return EstimateWithError(method="convolution", value=value, error=value * (e1 + e2),
                             meta={"n": n, "grid_step": d.grid_step})


# --- bounds on the exponential moment ------------------------------------------

def sum_second_moment(n: int) -> float:
    """``E S^2 = n + n(n-1) 2/pi``."""
    return n + n * (n - 1) * 2.0 / math.pi


def jensen_lower(n: int) -> float:
    n = _check_n(n)
    return sum_second_moment(n) / (4.0 * (n - 1))


def log_sobolev_upper(n: int) -> float:
    n = _check_n(n)
    lam = 1.0 / (4.0 * (n - 1))
    return lam * sum_second_moment(n) * (1.0 + n * lam / (1.0 - n * lam))


# --- Monte Carlo ---------------------------------------------------------------

def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _blocks(samples):
    nb = -(-samples // BLOCK)
    return [(b, min(BLOCK, samples - b * BLOCK)) for b in range(nb)]


def _run_blocks(fn, blocks, threads):
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map keeps submission order, so the reduction below is fixed
        return list(pool.map(fn, blocks))


def resolve_threads(threads: int) -> int:
    threads = int(threads)
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads or (os.cpu_count() or 1)


_SPIN_CHUNK = 64


def _tilted_mc(n, samples, seed, threads):
    samples = int(samples)
    if samples < 1:
        raise ResourceError("tilted Monte Carlo needs a positive sample budget")
    if n * samples > MC_BUDGET:
        raise ResourceError(f"{n} x {samples} draws exceed the budget of {MC_BUDGET}")
    lam = critical_constants().half_v_star
    log_cdf = float(log_std_normal_cdf(lam))
    cdf = math.exp(log_cdf)
    shift = n * float(log_halfnormal_mgf(lam))
    c = 1.0 / (4.0 * (n - 1))

    def block(item):
        b, size = item
        rng = _block_rng(seed, b)
        s = np.zeros(size)
        for j0 in range(0, n, _SPIN_CHUNK):
            k = min(_SPIN_CHUNK, n - j0)
            u = rng.random((size, k))
            # |N_i| under the tilt: N(lam, 1) truncated to [0, inf)
            s += (lam - ndtri(u * cdf)).sum(axis=1)
        lw = c * s * s - lam * s + shift
        top = float(lw.max())
        e = np.exp(lw - top)
        return top, float(e.sum()), float((e * e).sum())

    parts = _run_blocks(block, _blocks(samples), resolve_threads(threads))
    top = max(p[0] for p in parts)
    s1 = sum(p[1] * math.exp(p[0] - top) for p in parts)
    s2 = sum(p[2] * math.exp(2.0 * (p[0] - top)) for p in parts)
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0)
    # delta method: se(log mean) = se(mean) / mean
    se_log = math.sqrt(var / samples) / mean
    return EstimateWithError(method="tilted-mc", log_value=top + math.log(mean), error=se_log,
                             n_samples=samples, meta={"n": n, "lambda": lam, "seed": seed})


@numba.njit(cache=True, nogil=True)
def _count_all_ones_minima(g, n):
    # g[r, k] is the coupling of pair k; for sigma = 1, Z_i = -sum_j W_ij
    rows = g.shape[0]
    z = np.empty(n)
    hits = 0
    for r in range(rows):
        z[:] = 0.0
        k = 0
        for j in range(1, n):
            for i in range(j):
                w = g[r, k]
                z[i] -= w
                z[j] -= w
                k += 1
        ok = True
        for i in range(n):
            if z[i] < 0.0:
                ok = False
                break
        if ok:
            hits += 1
    return hits


def mc_local_opt_probability(n: int, samples: int, seed: int = 0, threads: int = 1) -> EstimateWithError:
    """Fraction of sampled instances in which the all-ones configuration is a local minimum."""
    if int(n) != n or n < 2:
        raise DomainError(f"need integer n >= 2, got {n!r}")
    n, samples = int(n), int(samples)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    m = n * (n - 1) // 2
    if m * samples > MC_BUDGET:
        raise ResourceError(f"{m} x {samples} couplings exceed the budget of {MC_BUDGET}")

    def block(item):
        b, size = item
        g = _block_rng(seed, b).standard_normal((size, m))
        return _count_all_ones_minima(g, n)

    hits = sum(_run_blocks(block, _blocks(samples), resolve_threads(threads)))
    p = hits / samples
    se = math.sqrt(p * (1.0 - p) / samples)
    return EstimateWithError(method="naive-mc", value=p, error=se, n_samples=samples,
                             meta={"n": n, "hits": hits, "seed": seed})


__all__ = [
    "EstimateWithError", "ExpectedCount", "TailReport", "local_opt_probability",
    "expected_count", "identity_offset", "moment_extent", "exp_moment",
    "truncated_exp_moment", "tail_probability", "energy_bound", "conditional_energy_tail",
    "conditional_energy_mean", "sum_second_moment", "jensen_lower", "log_sobolev_upper",
    "mc_local_opt_probability", "resolve_threads",
]
