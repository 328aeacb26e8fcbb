"""Sample-and-probe answers under the core set closure assumption.

A plan draws ``m`` independent uniform samples of ``s`` distinct objects and
probes their union. If the core set (``c`` oracle neighbors whose proxy prefix
is a valid answer) is closed, the answer is valid exactly when the union hits
the core set, which happens with probability ``success_prob_f(n, s, m, c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    Answer,
    Dataset,
    Oracle,
    OracleLedger,
    Query,
    QueryKind,
    ValidationError,
    core_set,
    floor_snapped,
    prefix,
    probe,
)

MODES = ("exact", "s1", "m1")
PROVENANCE = {"exact": "exact", "s1": "approx-s1", "m1": "approx-m1"}
EOC_TIE_RTOL = 1e-9
BOUNDARY_RTOL = 1e-9

DEFAULT_EPS_P = 0.001
DEFAULT_B_PRIME = 100
DEFAULT_EPS_R = 0.1
DEFAULT_DELTA_R = 0.05


class ConfigError(ValueError):
    """Inconsistent algorithm parameters."""


@dataclass(frozen=True)
class SamplePlan:
    s: int
    m: int
    provenance: str
    predicted_eoc: float


@dataclass(frozen=True)
class HoeffdingParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (0 < self.epsilon < 1 and 0 < self.delta < 1):
            raise ValidationError("Hoeffding epsilon and delta must lie in (0,1)")

    @property
    def n(self) -> int:
        return hoeffding_n(self.delta, self.epsilon)


def _check(n: int, c: int, delta: float) -> None:
    if n < 1:
        raise ValidationError("dataset must be non-empty")
    if not 1 <= c <= n:
        raise ValidationError(f"core set size c={c} outside [1, {n}]")
    if not 0 < delta < 1:
        raise ValidationError(f"failure rate {delta} outside (0,1)")


def success_prob_f(n: int, s: int, m: int, c: int) -> float:
    """Probability that m uniform size-s samples hit a fixed set of c objects."""
    if c < 1:
        raise ValidationError("core set must be non-empty")
    if not (1 <= c <= n and 1 <= s <= n and m >= 1):
        raise ValidationError(f"invalid arguments n={n} s={s} m={m} c={c}")
    if s > n - c:
        return 1.0
    miss = math.prod((n - s - i) / (n - i) for i in range(c))
    return 1.0 - miss ** m


def eoc(n: int, s: int, m: int) -> float:
    """Expected number of distinct objects probed by plan (s, m)."""
    if s >= n:
        return float(n)
    return float(n * -math.expm1(m * math.log1p(-s / n)))


def _log_miss(n: int, c: int, s_max: int) -> np.ndarray:
    """log Pr[a size-s sample misses c objects] for s = 1..s_max (s_max <= n - c).

    Uses the telescoped form prod_{t<s} (n-c-t)/(n-t).
    """
    t = np.arange(s_max, dtype=np.float64)
    return np.cumsum(np.log1p(-c / (n - t)))


def _meets_exactly(n: int, c: int, s: int, m: int, delta: float) -> bool:
    """Rational test of Pr[m size-s samples all miss c objects] <= delta."""
    d = Fraction(str(delta))
    miss = Fraction(math.comb(n - c, s), math.comb(n, s))
    return miss.numerator ** m * d.denominator <= d.numerator * miss.denominator ** m


def _min_m(log_miss: np.ndarray, delta: float, n: int, c: int, first_s: int = 1) -> np.ndarray:
    """Smallest m >= 1 with miss(s)^m <= delta, elementwise, s counting up from ``first_s``.

    Logs decide every entry except those within rounding of the target, which
    are settled with exact arithmetic.
    """
    ld = math.log(delta)
    m = np.maximum(1, np.ceil(ld / log_miss)).astype(np.int64)
    lower = (m > 1) & ((m - 1) * log_miss <= ld)
    m[lower] -= 1
    m[m * log_miss > ld] += 1
    tol = BOUNDARY_RTOL * abs(ld)
    near = (np.abs(m * log_miss - ld) <= tol) | ((m > 1) & (np.abs((m - 1) * log_miss - ld) <= tol))
    for i in np.flatnonzero(near):
        s, k = int(i) + first_s, int(m[i])
        while k > 1 and _meets_exactly(n, c, s, k - 1, delta):
            k -= 1
        while not _meets_exactly(n, c, s, k, delta):
            k += 1
        m[i] = k
    return m


def m_lower(s: int, n: int, c: int, delta: float) -> int:
    """Fewest samples of size s that hit the core set with probability >= 1 - delta."""
    _check(n, c, delta)
    if not 1 <= s <= n:
        raise ValidationError(f"sample size {s} outside [1, {n}]")
    if s > n - c:
        return 1
    return int(_min_m(_log_miss(n, c, s)[-1:], delta, n, c, first_s=s)[0])


def _eoc_vec(n: int, s: np.ndarray, m: np.ndarray) -> np.ndarray:
    return n * -np.expm1(m * np.log1p(-s / n))


def plan_exact(n: int, c: int, delta: float) -> SamplePlan:
    """Minimum-EOC plan over s in [1, n-c+1] with m = m_lower(s); smallest s on ties."""
    _check(n, c, delta)
    s_max = n - c
    if s_max >= 1:
        s = np.arange(1, s_max + 1)
        m = _min_m(_log_miss(n, c, s_max), delta, n, c)
        cost = _eoc_vec(n, s, m)
        # pigeonhole point: every sample of size n-c+1 meets the core set
        s = np.append(s, s_max + 1)
        m = np.append(m, 1)
        cost = np.append(cost, eoc(n, s_max + 1, 1))
    else:
        s, m, cost = np.array([1]), np.array([1]), np.array([eoc(n, 1, 1)])
    best = cost.min()
    i = int(np.flatnonzero(cost <= best * (1 + EOC_TIE_RTOL))[0])
    return SamplePlan(int(s[i]), int(m[i]), "exact", eoc(n, int(s[i]), int(m[i])))


def plan_approx_s1(n: int, c: int, delta: float) -> SamplePlan:
    _check(n, c, delta)
    m = m_lower(1, n, c, delta)
    return SamplePlan(1, m, "approx-s1", eoc(n, 1, m))


def plan_approx_m1(n: int, c: int, delta: float) -> SamplePlan:
    _check(n, c, delta)
    harmonic = math.fsum(1.0 / (n - i) for i in range(c))
    s = min(n, max(1, math.ceil(-math.log(delta) / harmonic)))
    return SamplePlan(s, 1, "approx-m1", eoc(n, s, 1))


def make_plan(n: int, c: int, delta: float, mode: str = "exact") -> SamplePlan:
    try:
        fn = {"exact": plan_exact, "s1": plan_approx_s1, "m1": plan_approx_m1}[mode]
    except KeyError:
        raise ValidationError(f"unknown plan mode {mode!r}; expected one of {MODES}") from None
    return fn(n, c, delta)


def rand_s_plan(n: int, c: int, delta: float, rng) -> SamplePlan:
    """Baseline: uniform random s in [1, n-c+1] with m = m_lower(s)."""
    _check(n, c, delta)
    s = int(rng.integers(1, n - c + 2))
    m = m_lower(s, n, c, delta)
    return SamplePlan(s, m, "rand-s", eoc(n, s, m))


def rand_sm_plan(n: int, c: int, delta: float, rng) -> SamplePlan:
    """Baseline: random feasible (s, m), m uniform in [m_lower(s), m_lower(1)]."""
    _check(n, c, delta)
    s = int(rng.integers(1, n - c + 2))
    lo = m_lower(s, n, c, delta)
    hi = max(lo, m_lower(1, n, c, delta))
    m = int(rng.integers(lo, hi + 1))
    return SamplePlan(s, m, "rand-sm", eoc(n, s, m))


def savings_ratio(n: int, plan: SamplePlan, optimal: SamplePlan) -> float:
    denom = n - optimal.predicted_eoc
    if denom <= 0:
        return math.inf
    return (n - plan.predicted_eoc) / denom


def s1_savings_bound(n: int, c: int, delta: float) -> float:
    """Lower bound on the savings ratio of the s = 1 plan."""
    return delta ** ((-1.0 / c) * (1.0 / n - n / (n - 1))) * (1.0 - 1.0 / n)


def m1_savings_bound(n: int, c: int, delta: float) -> float:
    """Lower bound on the savings ratio of the m = 1 plan."""
    return delta ** (-1.0 / (n * c)) * (1.0 - 1.0 / n + math.log(delta) / c)


# --- sampling and probing --------------------------------------------------

def draw_union(n: int, plan: SamplePlan, rng) -> np.ndarray:
    """Sorted distinct positions covered by m independent size-s samples."""
    samples = [rng.choice(n, size=plan.s, replace=False) for _ in range(plan.m)]
    return np.unique(np.concatenate(samples))


def _run_plan(ds: Dataset, q: Query, plan: SamplePlan, oracle: Oracle, ledger: OracleLedger, rng):
    pos = draw_union(len(ds), plan, rng)
    ids = ds.ids[pos]
    is_nn = probe(oracle, ledger, ids) <= q.radius
    hit_ranks = pos[is_nn] + 1
    fallback = hit_ranks.size == 0
    if q.kind is QueryKind.RT:
        k = len(ds) if fallback else int(hit_ranks.max())
    else:
        k = 0 if fallback else int(hit_ranks.min())
    return k, fallback, set(ids[is_nn].tolist())


def run_plan(ds: Dataset, q: Query, plan: SamplePlan, oracle: Oracle, ledger: OracleLedger,
             seed=None, algorithm: str = "csc") -> Answer:
    """Probe the union of the plan's samples and return the proxy prefix it implies.

    RT takes the largest rank among sampled neighbors (all of D if none), PT the
    smallest (the empty set if none).
    """
    before = ledger.count
    k, fallback, _ = _run_plan(ds, q, plan, oracle, ledger, np.random.default_rng(seed))
    return Answer(prefix(ds, k), k, ledger.count - before, algorithm,
                  {"s": plan.s, "m": plan.m, "plan": plan.provenance,
                   "predicted_eoc": plan.predicted_eoc, "fallback": fallback})


def csc(ds: Dataset, q: Query, c: int, delta: float, mode: str, oracle: Oracle,
        ledger: OracleLedger, seed=None) -> Answer:
    if c > len(ds):
        raise ValidationError(f"core set size {c} exceeds dataset size {len(ds)}")
    plan = make_plan(len(ds), c, delta, mode)
    return run_plan(ds, q, plan, oracle, ledger, seed, "csc")


def hoeffding_n(delta: float, epsilon: float) -> int:
    """Draws needed so that Pr[mean - epsilon <= mu] >= 1 - delta."""
    if not (0 < delta < 1 and 0 < epsilon < 1):
        raise ValidationError("Hoeffding delta and epsilon must lie in (0,1)")
    return math.ceil(math.log(delta) / (-2.0 * epsilon ** 2))


def _hoeffding(pool: np.ndarray, delta, epsilon, radius, oracle, ledger, rng):
    if len(pool) == 0:
        raise ValidationError("Hoeffding estimate needs a non-empty pool")
    draws = rng.integers(len(pool), size=hoeffding_n(delta, epsilon))
    uniq, inverse = np.unique(draws, return_inverse=True)
    ids = pool[uniq]
    is_nn = probe(oracle, ledger, ids) <= radius
    return float(is_nn[inverse].mean()), set(ids[is_nn].tolist())


def hoeffding_est(pool, delta: float, epsilon: float, radius: float, oracle: Oracle,
                  ledger: OracleLedger, seed=None) -> float:
    """Fraction of with-replacement draws from ``pool`` that are oracle neighbors.

    Each distinct id is probed once.
    """
    pool = np.asarray(sorted(pool) if isinstance(pool, (set, frozenset)) else pool, dtype=np.int64)
    return _hoeffding(pool, delta, epsilon, radius, oracle, ledger, np.random.default_rng(seed))[0]


def core_size_lower_bound(n: int, mu_hat: float, epsilon: float, gamma: float) -> int:
    """RT core set size implied by at least n * (mu_hat - epsilon) neighbors, within [1, n]."""
    c = floor_snapped(n * (mu_hat - epsilon) * (1 - gamma)) + 1
    return min(n, max(1, c))


def cse_rt(ds: Dataset, q: Query, delta_r: float, epsilon_r: float, oracle: Oracle,
           ledger: OracleLedger, seed=None, mode: str = "m1") -> Answer:
    """Recall-target answer when the core set size is unknown.

    Estimates the neighbor fraction, turns it into a lower bound on c that
    holds with probability 1 - delta_r, and spends the remaining failure
    budget on CSC so the overall success probability is at least 1 - delta.
    """
    if q.kind is not QueryKind.RT:
        raise ValidationError("cse_rt needs a recall-target query")
    if not 0 < delta_r < q.delta:
        raise ConfigError(f"delta_r={delta_r} must lie in (0, delta={q.delta})")
    rng = np.random.default_rng(seed)
    n = len(ds)
    before = ledger.count
    mu_hat, _ = _hoeffding(ds.ids, delta_r, epsilon_r, q.radius, oracle, ledger, rng)
    c_low = core_size_lower_bound(n, mu_hat, epsilon_r, q.gamma)
    delta_csc = (q.delta - delta_r) / (1 - delta_r)
    plan = make_plan(n, c_low, delta_csc, mode)
    k, fallback, _ = _run_plan(ds, q, plan, oracle, ledger, rng)
    return Answer(prefix(ds, k), k, ledger.count - before, "cse",
                  {"mu_hat": mu_hat, "c_lower": c_low, "delta_csc": delta_csc,
                   "s": plan.s, "m": plan.m, "plan": plan.provenance, "fallback": fallback})


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def cse_pt(ds: Dataset, q: Query, b_prime: int, epsilon_p: float, oracle: Oracle,
           ledger: OracleLedger, seed=None, mode: str = "m1") -> Answer:
    """Precision-target answer certified by a Hoeffding lower bound on precision.

    Falls back to the probed oracle neighbors when the bound misses gamma.
    """
    if q.kind is not QueryKind.PT:
        raise ValidationError("cse_pt needs a precision-target query")
    n = len(ds)
    if not 1 <= b_prime <= n:
        raise ValidationError(f"pilot sample size b'={b_prime} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    before = ledger.count

    pos = np.sort(rng.choice(n, size=b_prime, replace=False))
    ids = ds.ids[pos]
    is_nn = probe(oracle, ledger, ids) <= q.radius
    found = set(ids[is_nn].tolist())
    sample_core, sample_c, _ = core_set(ds.subset(ids.tolist()), q, found)
    c_hat = min(n, max(1, _round_half_up(n / b_prime * sample_c)))

    plan = make_plan(n, c_hat, q.delta, mode)
    k1, _, more = _run_plan(ds, q, plan, oracle, ledger, rng)
    found |= more
    k2 = max((ds.rank(x) for x in sample_core), default=0)
    k_hat = max(k1, k2)

    diag = {"c_hat": c_hat, "k1": k1, "k2": k2, "k_hat": k_hat, "s": plan.s, "m": plan.m,
            "plan": plan.provenance}
    if k_hat > 0:
        mu_hat, more = _hoeffding(ds.ids[:k_hat], q.delta, epsilon_p, q.radius, oracle, ledger, rng)
        found |= more
        lower = mu_hat - epsilon_p
        diag["precision_lower"] = lower
        if lower >= q.gamma:
            return Answer(prefix(ds, k_hat), k_hat, ledger.count - before, "cse",
                          {**diag, "branch": "hoeffding"})
    return Answer(frozenset(found), None, ledger.count - before, "cse",
                  {**diag, "branch": "fallback"})


def cse(ds: Dataset, q: Query, oracle: Oracle, ledger: OracleLedger, seed=None, *,
        delta_r: float = DEFAULT_DELTA_R, epsilon_r: float = DEFAULT_EPS_R,
        b_prime: int = DEFAULT_B_PRIME, epsilon_p: float = DEFAULT_EPS_P,
        mode: str = "m1") -> Answer:
    if q.kind is QueryKind.RT:
        return cse_rt(ds, q, delta_r, epsilon_r, oracle, ledger, seed, mode)
    return cse_pt(ds, q, min(b_prime, len(ds)), epsilon_p, oracle, ledger, seed, mode)
