"""Invariant suites run by ``sklandscape selfcheck``.

Each check returns a ``CheckResult``; ``run_selfcheck`` runs them in
module order and collects a JSON-serialisable report.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from . import estimators as est
from .ensemble import enumeration_crosscheck
from .gaussian import (
    HALFNORMAL_MEAN,
    halfnormal_mgf,
    log_std_normal_cdf,
    log_std_normal_pdf,
    phi_double_prime,
    phi_prime,
    std_normal_cdf,
    verify_appendix_bound,
)
from .model import energy, local_fields, sample_instance
from .rate import (
    R,
    critical_constants,
    lambda_star,
    lambda_star_derivative_check,
    mu_star,
    theta_ratio,
)

LEVELS = ("quick", "full")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# --- gaussian kernels ---------------------------------------------------------

def check_cdf_symmetry():
    x = np.linspace(-40.0, 40.0, 8001)
    gap = float(np.max(np.abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0)))
    return gap <= 1e-14, {"max_gap": gap}


def check_mgf_identity():
    worst = 0.0
    for lam in np.linspace(0.0, 5.0, 50):
        q, _ = integrate.quad(lambda x: 2.0 * math.exp(log_std_normal_pdf(x) + lam * x), 0.0, math.inf,
                              epsabs=0.0, epsrel=1e-13, limit=200)
        worst = max(worst, abs(halfnormal_mgf(lam) - q) / halfnormal_mgf(lam))
    return worst <= 1e-9, {"max_rel_error": worst}


def check_phi_derivatives():
    # differences of log Phi = phi - log 2 keep full relative precision at large lam
    h = 1e-4
    worst = 0.0
    for lam in np.linspace(0.0, 10.0, 101):
        d1 = (log_std_normal_cdf(lam + h) - log_std_normal_cdf(lam - h)) / (2 * h)
        d2 = (phi_prime(lam + h) - phi_prime(lam - h)) / (2 * h)
        worst = max(worst, abs(d1 - phi_prime(lam)) / abs(phi_prime(lam)),
                    abs(d2 - phi_double_prime(lam)) / max(abs(phi_double_prime(lam)), 1e-300))
    return worst <= 1e-6, {"max_rel_error": worst}


def check_appendix_bound():
    rep = verify_appendix_bound(1e-3)
    ok = rep.holds and round(rep.interval_bound, 3) == 0.927 and rep.interval_bound < 0.95
    return ok, rep.to_dict()


# --- rate function ---------------------------------------------------------------

def _x_grid(hi=4.0, step=0.01):
    return np.arange(HALFNORMAL_MEAN + 0.01, hi + 1e-12, step)


def check_duality():
    h = 1e-6
    worst = max(abs((mu_star(x + h) - mu_star(x - h)) / (2 * h) - lambda_star(x)) for x in _x_grid())
    return worst <= 1e-5, {"max_gap": worst}


def check_concavity():
    h = 1e-3
    vals = [(R(x + h) - 2 * R(x) + R(x - h)) / h ** 2 for x in _x_grid(step=0.05)]
    lo, hi = min(vals), max(vals)
    return lo >= -20.0 and hi <= -0.5 + 1e-3, {"min": lo, "max": hi}


def check_lambda_derivative():
    rep = lambda_star_derivative_check(_x_grid(step=0.05))
    return rep.holds and rep.max_analytic_gap <= 1e-4, {
        "min": rep.min_value, "max": rep.max_value, "max_analytic_gap": rep.max_analytic_gap}


def check_theta():
    v = critical_constants().v_star
    vals = [theta_ratio(x) for x in _x_grid(step=0.01) if abs(x - v) >= 1e-3]
    lo, hi = min(vals), max(vals)
    return lo >= 0.25 and hi <= 10.0, {"min": lo, "max": hi}


def check_constants():
    cc = critical_constants()
    ok = (1 / (2 * math.pi) < cc.alpha_star < 2 / (3 * math.pi)
          and abs(lambda_star(cc.v_star) - cc.half_v_star) <= 1e-10
          and cc.stationarity_residual <= 1e-12)
    return ok, cc.to_dict()


# --- sk model --------------------------------------------------------------------

def check_flip_identity(triples: int = 10 ** 4, seed: int = 11):
    rng = np.random.default_rng(seed)
    worst = 0.0
    per = 100
    for t in range(triples // per):
        n = int(rng.integers(2, 40))
        inst = sample_instance(n, seed * 100003 + t)
        for _ in range(per):
            s = rng.choice([-1.0, 1.0], size=n)
            i = int(rng.integers(n))
            lf = local_fields(inst, s)
            s2 = s.copy()
            s2[i] = -s2[i]
            lhs = energy(inst, s2)
            rhs = lf.energy + 2.0 * lf.z[i]
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst <= 1e-9, {"triples": triples, "max_rel_error": worst}


# --- landscape estimators -----------------------------------------------------

def check_representation(n_max: int = 64):
    worst = 0.0
    for n in range(3, n_max + 1):
        lp = est.local_opt_probability(n).log_value
        lm = est.exp_moment(n).log_value
        worst = max(worst, abs(lp - est.identity_offset(n) - lm))
    return worst <= 1e-7, {"n_max": n_max, "max_log_gap": worst}


def check_chernoff():
    rows = {}
    ok = True
    for x in (1.0, 1.2, 1.5):
        r = [est.tail_probability(n, x).r_n for n in (8, 32, 128)]
        rows[str(x)] = r
        ok &= all(v >= -1e-9 for v in r) and r[0] > r[1] > r[2]
    return ok, {"r_n": rows}


def check_sandwich():
    rows = {}
    ok = True
    for n in (4, 16, 64, 256):
        lo, val, hi = est.jensen_lower(n), est.exp_moment(n).log_value, est.log_sobolev_upper(n)
        rows[str(n)] = [lo, val, hi]
        ok &= lo <= val <= hi
    return ok, {"lower_value_upper": rows}


def check_enumeration(instances: int = 500, seed: int = 2026):
    c = enumeration_crosscheck(12, instances, seed)
    return c.passed, c.to_dict()


def checks_for(level: str):
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    suite = [
        ("gaussian.cdf_symmetry", check_cdf_symmetry),
        ("gaussian.mgf_identity", check_mgf_identity),
        ("gaussian.phi_derivatives", check_phi_derivatives),
        ("gaussian.appendix_bound", check_appendix_bound),
        ("rate.constants", check_constants),
        ("rate.duality", check_duality),
        ("rate.concavity", check_concavity),
        ("rate.lambda_derivative", check_lambda_derivative),
        ("rate.theta", check_theta),
        ("model.flip_identity", check_flip_identity),
        ("estimators.representation", check_representation),
        ("estimators.chernoff", check_chernoff),
        ("estimators.sandwich", check_sandwich),
    ]
    if level == "full":
        suite.append(("estimators.enumeration_n12", check_enumeration))
    return suite


def run_selfcheck(level: str = "quick") -> list[CheckResult]:
    results = []
    for name, fn in checks_for(level):
        t = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported like any other
            ok, detail = False, {"exception": f"{type(exc).__name__}: {exc}"}
        results.append(CheckResult(name=name, passed=bool(ok), detail=_clean(detail),
                                   seconds=time.perf_counter() - t))
    return results
