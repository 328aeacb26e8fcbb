"""Brute-force and Monte-Carlo reference oracles.

Nothing here imports the modules it checks: distributions are obtained by
enumerating every joint Bernoulli outcome, validity is decided with exact
rational arithmetic, and plans are found by stepping m one sample at a time.
Inputs are capped so each call stays well under a second.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from statistics import NormalDist
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_PNS = 20
MAX_POS = 16
MAX_FIXED = 12
MAX_PLAN = 500
TIE = 1e-12
BOUNDARY_RTOL = 1e-9


class SizeCapError(ValueError):
    """Input too large for exhaustive enumeration."""


@dataclass(frozen=True)
class RefPlan:
    s: int
    m: int
    eoc: float


def _cap(n: int, limit: int) -> None:
    if n > limit:
        raise SizeCapError(f"size {n} exceeds brute-force cap {limit}")


def _outcomes(phis: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Every neighbor pattern as a bitmask (bit i = object i) and its probability."""
    phis = [float(x) for x in phis]
    n = len(phis)
    codes = np.arange(1 << n, dtype=np.int64)
    prob = np.ones(1 << n)
    for i, phi in enumerate(phis):
        bit = (codes >> i) & 1
        prob *= np.where(bit == 1, phi, 1.0 - phi)
    return codes, prob


def _mask(S: Iterable[int]) -> int:
    out = 0
    for i in S:
        out |= 1 << int(i)
    return out


def _ratio(gamma: float) -> tuple[int, int]:
    g = Fraction(str(gamma))
    return g.numerator, g.denominator


def brute_pns(phis: Sequence[float]) -> np.ndarray:
    """Mass of the neighbor count by summing over all 2^n outcomes."""
    _cap(len(phis), MAX_PNS)
    codes, prob = _outcomes(phis)
    counts = np.bitwise_count(codes).astype(np.int64)
    return np.bincount(counts, weights=prob, minlength=len(phis) + 1)


def _valid_table(codes, masks, kind, gamma):
    """valid[o, j]: outcome o makes subset masks[j] meet the target."""
    num, den = _ratio(gamma)
    hits = np.bitwise_count(codes[:, None] & masks[None, :]).astype(np.int64)
    if kind == "PT":
        size = np.bitwise_count(masks).astype(np.int64)[None, :]
        return (size == 0) | (hits * den >= num * size)
    total = np.bitwise_count(codes).astype(np.int64)[:, None]
    return (total == 0) | (hits * den >= num * total)


def _cr_table(codes, masks, kind):
    """Complementary rate per (outcome, subset): recall for PT, precision for RT."""
    hits = np.bitwise_count(codes[:, None] & masks[None, :]).astype(np.float64)
    if kind == "PT":
        total = np.bitwise_count(codes).astype(np.float64)[:, None]
        return np.where(total == 0, 1.0, hits / np.maximum(total, 1.0))
    size = np.bitwise_count(masks).astype(np.float64)[None, :]
    return np.where(size == 0, 1.0, hits / np.maximum(size, 1.0))


def _kind(q) -> str:
    return str(getattr(q.kind, "value", q.kind))


def brute_pos(phis_D: Sequence[float], S: Iterable[int], q) -> float:
    """Exact success probability of the subset S (0-based rank positions)."""
    _cap(len(phis_D), MAX_POS)
    codes, prob = _outcomes(phis_D)
    masks = np.array([_mask(S)], dtype=np.int64)
    return float(prob @ _valid_table(codes, masks, _kind(q), q.gamma)[:, 0])


def brute_expected_cr(phis_D: Sequence[float], S: Iterable[int], q) -> float:
    _cap(len(phis_D), MAX_POS)
    codes, prob = _outcomes(phis_D)
    masks = np.array([_mask(S)], dtype=np.int64)
    return float(prob @ _cr_table(codes, masks, _kind(q))[:, 0])


def _score_subsets(phis_D, masks, q):
    codes, prob = _outcomes(phis_D)
    kind = _kind(q)
    pos = prob @ _valid_table(codes, masks, kind, q.gamma)
    ecr = prob @ _cr_table(codes, masks, kind)
    return pos, ecr


def _subsets(n: int, k: int | None = None) -> list[tuple[int, ...]]:
    if k is None:
        return [c for r in range(n + 1) for c in itertools.combinations(range(n), r)]
    return list(itertools.combinations(range(n), k))


def brute_best_fixed_size(phis_D: Sequence[float], k: int, q) -> frozenset:
    """Size-k subset maximizing (success probability, expected CR) lexicographically."""
    n = len(phis_D)
    _cap(n, MAX_FIXED)
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    subs = _subsets(n, k)
    masks = np.array([_mask(s) for s in subs], dtype=np.int64)
    pos, ecr = _score_subsets(phis_D, masks, q)
    top = pos >= pos.max() - TIE
    best = int(np.flatnonzero(top)[np.argmax(ecr[top])])
    return frozenset(subs[best])


def fixed_size_scores(phis_D: Sequence[float], k: int, q) -> tuple[float, float]:
    """Best success probability and best expected CR over size-k subsets (each maximized separately)."""
    n = len(phis_D)
    _cap(n, MAX_FIXED)
    masks = np.array([_mask(s) for s in _subsets(n, k)], dtype=np.int64)
    pos, ecr = _score_subsets(phis_D, masks, q)
    return float(pos.max()), float(ecr.max())


def brute_optimal_answer(phis_D: Sequence[float], q) -> tuple[frozenset, float]:
    """Over all 2^n subsets valid w.h.p., the one with maximal expected CR."""
    n = len(phis_D)
    _cap(n, MAX_FIXED)
    subs = _subsets(n)
    masks = np.array([_mask(s) for s in subs], dtype=np.int64)
    pos, ecr = _score_subsets(phis_D, masks, q)
    ok = pos >= 1 - q.delta
    ecr = np.where(ok, ecr, -np.inf)
    best = int(np.argmax(ecr))
    return frozenset(subs[best]), float(ecr[best])


def brute_plan(n: int, c: int, delta: float) -> RefPlan:
    """Scan every sample size; per size, add samples until the miss probability is <= delta."""
    _cap(n, MAX_PLAN)
    if not 1 <= c <= n:
        raise ValueError("need 1 <= c <= n")
    exact_delta = Fraction(str(delta))
    cands = []
    for s in range(1, n + 1):
        exact_miss = Fraction(math.comb(n - c, s), math.comb(n, s))
        miss = float(exact_miss)
        m, miss_m = 1, miss
        while miss_m > delta * (1 + BOUNDARY_RTOL):
            m += 1
            miss_m *= miss
        # within rounding of the target the float product cannot decide; compare exactly
        if miss_m >= delta * (1 - BOUNDARY_RTOL) and exact_miss ** m > exact_delta:
            m += 1
        cands.append((s, m, n * (1.0 - ((n - s) / n) ** m)))
    best = min(x[2] for x in cands)
    s, m, cost = next(x for x in cands if x[2] <= best * (1 + 1e-9))
    return RefPlan(s, m, cost)


# --- Monte-Carlo success rates ----------------------------------------------

def wilson_interval(successes: int, trials: int, level: float = 0.99) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    z = NormalDist().inv_cdf(0.5 + level / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def is_valid(member_ids: Iterable[int], neighbors: Iterable[int], kind: str, gamma: float) -> bool:
    """Exact check of precision or recall >= gamma (empty sets count as 1)."""
    S, nn = set(member_ids), set(neighbors)
    hit = len(S & nn)
    denom = len(S) if kind == "PT" else len(nn)
    return denom == 0 or Fraction(hit, denom) >= Fraction(str(gamma))


def monte_carlo_success(strategy: Callable, scenario: Callable, trials: int, seed: int):
    """Empirical success rate of ``strategy`` and its 99% Wilson interval.

    ``scenario(seed_seq)`` returns ``(ds, q)`` with ground truth;
    ``strategy(ds, q, seed_seq)`` returns an answer with ``member_ids``.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    children = np.random.SeedSequence(seed).spawn(trials)
    wins = 0
    for child in children:
        data_seed, algo_seed = child.spawn(2)
        ds, q = scenario(data_seed)
        nn = ds.ids[ds.oracle <= q.radius].tolist()
        ans = strategy(ds, q, algo_seed)
        wins += is_valid(ans.member_ids, nn, _kind(q), q.gamma)
    return wins / trials, wilson_interval(wins, trials)
