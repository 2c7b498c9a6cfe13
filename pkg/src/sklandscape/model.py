"""The SK Hamiltonian: instances, energies, local fields, descent, enumeration.

Conventions: spins are numpy arrays of +-1; spin ``i`` of an ``n``-spin
configuration is encoded as bit ``i`` of an integer mask (set = +1).
Indices are 0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numba
import numpy as np

from .errors import ResourceError

RULES = ("steepest", "first-improvement", "random-improvement")
MAX_ENUMERATION_N = 26

_TWO_POW_M53 = 2.0 ** -53


@dataclass(frozen=True, eq=False)
class SkInstance:
    """Symmetric zero-diagonal Gaussian coupling matrix."""

    n: int
    weights: np.ndarray = field(repr=False)
    seed: int

    def __post_init__(self):
        self.weights.setflags(write=False)


@dataclass(frozen=True)
class LocalFields:
    z: np.ndarray
    energy: float


@dataclass
class DescentTrace:
    flips: np.ndarray
    energies: np.ndarray
    final: np.ndarray
    normalized_energy: float
    rule: str

    @property
    def n_flips(self) -> int:
        return int(self.flips.size)


@dataclass
class Enumeration:
    count: int
    energies: np.ndarray
    masks: np.ndarray

    def normalized_energies(self, n: int) -> np.ndarray:
        return self.energies / n ** 1.5


def pair_index(i, j):
    """Stream position of the coupling ``(i, j)``, independent of ``n``."""
    i, j = np.minimum(i, j), np.maximum(i, j)
    return j * (j - 1) // 2 + i


def sample_instance(n: int, seed: int) -> SkInstance:
    """Gaussian couplings from a counter-based stream keyed by ``seed``.

    Coupling ``(i, j)`` (``i < j``) is a Box-Muller normal built from the
    two Philox words at positions ``2k, 2k + 1`` with ``k = pair_index(i, j)``,
    so every entry depends only on ``(seed, i, j)``; in particular an
    instance is the leading principal block of any larger one with the
    same seed.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"need n >= 2 spins, got {n}")
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    m = n * (n - 1) // 2
    raw = np.random.Philox(key=seed).random_raw(2 * m)
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_POW_M53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * _TWO_POW_M53
    g = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
    w = np.zeros((n, n))
    j, i = _tri_positions(n)
    w[i, j] = g
    w[j, i] = g
    return SkInstance(n=n, weights=w, seed=seed)


def _tri_positions(n):
    # (j, i) with i < j, ordered by pair_index
    j = np.repeat(np.arange(1, n), np.arange(1, n))
    i = np.concatenate([np.arange(k) for k in range(1, n)]) if n > 1 else np.empty(0, int)
    return j, i


def as_spins(sigma, n: int | None = None) -> np.ndarray:
    s = np.asarray(sigma)
    if s.ndim != 1 or not np.all((s == 1) | (s == -1)):
        raise ValueError("a spin configuration is a 1-d vector of +-1 entries")
    if n is not None and s.size != n:
        raise ValueError(f"configuration has {s.size} spins, instance has {n}")
    return s.astype(np.float64)


def energy(inst: SkInstance, sigma) -> float:
    """``H(sigma) = sum_{i<j} sigma_i sigma_j W_ij``."""
    s = as_spins(sigma, inst.n)
    return float(0.5 * s @ inst.weights @ s)


def local_fields(inst: SkInstance, sigma) -> LocalFields:
    """``Z_i = -sum_{j != i} sigma_i sigma_j W_ij = (H(sigma^(i)) - H(sigma)) / 2``."""
    s = as_spins(sigma, inst.n)
    ws = inst.weights @ s
    return LocalFields(z=-s * ws, energy=float(0.5 * s @ ws))


def is_local_min(inst: SkInstance, sigma) -> bool:
    """No single flip lowers the energy; ``Z_i = 0`` counts as optimal."""
    return bool(np.all(local_fields(inst, sigma).z >= 0.0))


def flip(sigma, i: int) -> np.ndarray:
    s = np.array(sigma, copy=True)
    s[i] = -s[i]
    return s


def spins_to_mask(sigma) -> int:
    s = np.asarray(sigma)
    return int(sum(1 << int(i) for i in np.flatnonzero(s > 0)))


def mask_to_spins(mask: int, n: int) -> np.ndarray:
    bits = (int(mask) >> np.arange(n)) & 1
    return np.where(bits == 1, 1.0, -1.0)


# --- greedy descent --------------------------------------------------------

@numba.njit(cache=True)
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, nogil=True)
def _descent_kernel(w, sigma, z, h0, rule, seed):
    n = sigma.size
    cap = 4 * n + 16
    flips = np.empty(cap, np.int64)
    energies = np.empty(cap, np.float64)
    steps = 0
    h = h0
    last = -1
    state = np.uint64(seed)
    while True:
        pick = -1
        if rule == 0:
            best = 0.0
            for k in range(n):
                if z[k] < best:
                    best = z[k]
                    pick = k
        elif rule == 1:
            for t in range(n):
                k = (last + 1 + t) % n
                if z[k] < 0.0:
                    pick = k
                    break
        else:
            neg = 0
            for k in range(n):
                if z[k] < 0.0:
                    neg += 1
            if neg > 0:
                state, r = _splitmix64(state)
                target = np.int64(r % np.uint64(neg))
                for k in range(n):
                    if z[k] < 0.0:
                        if target == 0:
                            pick = k
                            break
                        target -= 1
        if pick < 0:
            break
        si = sigma[pick]
        h += 2.0 * z[pick]
        for j in range(n):
            if j != pick:
                z[j] += 2.0 * si * sigma[j] * w[pick, j]
        z[pick] = -z[pick]
        sigma[pick] = -si
        if steps == cap:
            cap *= 2
            nf = np.empty(cap, np.int64)
            ne = np.empty(cap, np.float64)
            nf[:steps] = flips[:steps]
            ne[:steps] = energies[:steps]
            flips = nf
            energies = ne
        flips[steps] = pick
        energies[steps] = h
        steps += 1
        last = pick
    return flips[:steps], energies[:steps]


def greedy_descent(inst: SkInstance, sigma0, rule: str = "steepest",
                   rng_seed: int = 0) -> DescentTrace:
    """Single-spin-flip descent until no flip lowers the energy.

    ``steepest`` flips the most negative field (lowest index on ties);
    ``first-improvement`` scans cyclically from the spin after the last
    flip; ``random-improvement`` picks uniformly among improving spins
    using a splitmix64 stream keyed by ``rng_seed``.  Only strictly
    negative fields are flipped, so the energy strictly decreases.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
    s = as_spins(sigma0, inst.n).copy()
    lf = local_fields(inst, s)
    z = lf.z.copy()
    flips, energies = _descent_kernel(np.ascontiguousarray(inst.weights), s, z,
                                      lf.energy, RULES.index(rule),
                                      np.uint64(int(rng_seed) % 2 ** 64))
    final_h = float(energies[-1]) if energies.size else lf.energy
    return DescentTrace(flips=flips, energies=energies, final=s,
                        normalized_energy=final_h / inst.n ** 1.5, rule=rule)


# --- exhaustive enumeration -----------------------------------------------

@numba.njit(cache=True, nogil=True)
def _enumerate_kernel(w):
    n = w.shape[0]
    sigma = -np.ones(n)
    z = np.empty(n)
    h = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += w[i, j]
        z[i] = -row
        h += 0.5 * row
    neg = 0
    for i in range(n):
        if z[i] < 0.0:
            neg += 1
    cap = 64
    energies = np.empty(cap, np.float64)
    masks = np.empty(cap, np.int64)
    count = 0
    mask = np.int64(0)
    total = np.int64(1) << n
    for step in range(total):
        if step > 0:
            k = 0
            t = step
            while (t & 1) == 0:
                t >>= 1
                k += 1
            sk = sigma[k]
            h += 2.0 * z[k]
            for j in range(n):
                if j != k:
                    old = z[j]
                    new = old + 2.0 * sk * sigma[j] * w[k, j]
                    z[j] = new
                    neg += (new < 0.0) - (old < 0.0)
            old = z[k]
            z[k] = -old
            neg += (-old < 0.0) - (old < 0.0)
            sigma[k] = -sk
            mask ^= np.int64(1) << k
        if neg == 0:
            if count == cap:
                cap *= 2
                ne = np.empty(cap, np.float64)
                nm = np.empty(cap, np.int64)
                ne[:count] = energies[:count]
                nm[:count] = masks[:count]
                energies = ne
                masks = nm
            energies[count] = h
            masks[count] = mask
            count += 1
    return energies[:count], masks[:count]


def enumerate_local_optima(inst: SkInstance) -> Enumeration:
    """All local minima, visited in Gray-code order with O(n) updates per step."""
    if inst.n > MAX_ENUMERATION_N:
        raise ResourceError(f"exhaustive enumeration is limited to n <= {MAX_ENUMERATION_N}, got {inst.n}")
    energies, masks = _enumerate_kernel(np.ascontiguousarray(inst.weights))
    return Enumeration(count=int(masks.size), energies=energies, masks=masks)


# --- MaxCut correspondence ---------------------------------------------------

def _subset_spins(n: int, subset: Iterable[int]) -> np.ndarray:
    s = -np.ones(n)
    for i in subset:
        i = int(i)
        if not 0 <= i < n:
            raise IndexError(f"vertex {i} outside 0..{n - 1}")
        s[i] = 1.0
    return s


def cut_value(inst: SkInstance, subset: Iterable[int]) -> float:
    """``sum_{i in S, j not in S} W_ij``."""
    s = _subset_spins(inst.n, subset)
    inside = s > 0
    return float(inst.weights[np.ix_(inside, ~inside)].sum())


def cut_energy_identity(inst: SkInstance, subset: Iterable[int], tol: float = 1e-9) -> bool:
    """``Cut(S) = (-H(sigma_S) + sum_{i<j} W_ij) / 2``."""
    subset = list(subset)
    lhs = cut_value(inst, subset)
    total = 0.5 * float(inst.weights.sum())
    rhs = 0.5 * (-energy(inst, _subset_spins(inst.n, subset)) + total)
    return abs(lhs - rhs) <= tol * max(1.0, abs(lhs), abs(total))


def is_locally_optimal_cut(inst: SkInstance, subset: Iterable[int]) -> bool:
    """No single-vertex move (in or out of ``S``) increases the cut."""
    members = {int(i) for i in subset}
    base = cut_value(inst, members)
    for v in range(inst.n):
        moved = members ^ {v}
        if cut_value(inst, moved) > base:
            return False
    return True
