"""Seeded ensembles of instances: descent runs and exhaustive enumeration.

Replica ``r`` of a run with master seed ``seed`` owns the substream
``SeedSequence(seed, spawn_key=(r, k))``; ``k = 0`` gives the instance
seed, ``k = 1`` the starting configuration, ``k = 2`` the descent tie
stream (further rules in a cross-check start from ``k = 3, 5``).
Results depend only on ``(seed, r)``, never on the thread layout.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .estimators import conditional_energy_mean, local_opt_probability, resolve_threads
from .model import enumerate_local_optima, greedy_descent, sample_instance, spins_to_mask


def _substream(seed: int, replica: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(replica), k))


def replica_seed(seed: int, replica: int, k: int = 0) -> int:
    return int(_substream(seed, replica, k).generate_state(1, np.uint64)[0])


def random_spins(seed: int, replica: int, n: int, k: int = 1) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(_substream(seed, replica, k)))
    return np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)


def _map(fn, items, threads):
    threads = resolve_threads(threads)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def simulate(n: int, replicas: int, rule: str, seed: int, threads: int = 1) -> list[dict]:
    """Greedy descent from a uniform start on a fresh instance per replica."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")

    def one(r):
        inst = sample_instance(n, replica_seed(seed, r))
        tr = greedy_descent(inst, random_spins(seed, r, n), rule, replica_seed(seed, r, 2))
        final = float(tr.energies[-1]) if tr.n_flips else float(tr.normalized_energy * n ** 1.5)
        return {"seed": inst.seed, "replica": r, "rule": rule, "flips": tr.n_flips,
                "final_energy": final, "normalized_energy": tr.normalized_energy}

    return _map(one, range(replicas), threads)


@dataclass
class EnumeratedInstance:
    seed: int
    count: int
    normalized_energies: np.ndarray
    masks: np.ndarray


def enumerate_ensemble(n: int, instances: int, seed: int, threads: int = 1) -> list[EnumeratedInstance]:
    if instances < 1:
        raise ValueError("instances must be >= 1")

    def one(r):
        inst = sample_instance(n, replica_seed(seed, r))
        e = enumerate_local_optima(inst)
        return EnumeratedInstance(seed=inst.seed, count=e.count,
                                  normalized_energies=e.normalized_energies(n), masks=e.masks)

    return _map(one, range(instances), threads)


@dataclass
class CrossCheck:
    n: int
    instances: int
    mean_count: float
    count_se: float
    expected_count: float
    count_z: float
    mean_energy: float
    energy_se: float
    predicted_energy: float
    energy_z: float
    descent_runs: int
    descent_in_set: int

    @property
    def passed(self) -> bool:
        return (abs(self.count_z) <= 3.0 and abs(self.energy_z) <= 3.0
                and self.descent_in_set == self.descent_runs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def enumeration_crosscheck(n: int, instances: int, seed: int, threads: int = 1,
                           rules=("steepest", "first-improvement", "random-improvement")) -> CrossCheck:
    """Enumerated optima against ``2^n P(n)`` and the conditional energy mean.

    The energy mean pools every optimum of every instance (a ratio
    estimator ``sum A_i / sum C_i``, with ``A_i`` the summed ``-H/n^{3/2}``
    and ``C_i`` the count of instance ``i``); its standard error is the
    delta-method one.  Each instance also runs one descent per rule from a
    random start and the endpoint must be among its enumerated optima.
    """

    def one(r):
        inst = sample_instance(n, replica_seed(seed, r))
        e = enumerate_local_optima(inst)
        masks = set(int(m) for m in e.masks)
        hits = 0
        for k, rule in enumerate(rules):
            # rule k starts from substream 1 + 2k (1, 3, 5, ...; 2 is the tie stream)
            start = random_spins(seed, r, n, 1 + 2 * k)
            tr = greedy_descent(inst, start, rule, replica_seed(seed, r, 2))
            hits += spins_to_mask(tr.final) in masks
        return e.count, float(-e.normalized_energies(n).sum()), hits

    res = _map(one, range(instances), threads)
    counts = np.array([c for c, _, _ in res], dtype=float)
    sums = np.array([a for _, a, _ in res])
    m = counts.size
    mean_c = float(counts.mean())
    se_c = float(counts.std(ddof=1) / math.sqrt(m))
    expected = 2.0 ** n * local_opt_probability(n).value
    ratio = float(sums.sum() / counts.sum())
    resid = sums - ratio * counts
    se_r = float(math.sqrt(np.sum(resid ** 2) / (m * (m - 1))) / mean_c)
    predicted = conditional_energy_mean(n).value
    return CrossCheck(
        n=n, instances=m, mean_count=mean_c, count_se=se_c, expected_count=expected,
        count_z=(mean_c - expected) / se_c, mean_energy=ratio, energy_se=se_r,
        predicted_energy=predicted, energy_z=(ratio - predicted) / se_r,
        descent_runs=m * len(rules), descent_in_set=int(sum(h for _, _, h in res)),
    )
