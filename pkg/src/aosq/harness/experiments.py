"""Experiment drivers producing per-trial records and aggregate reports.

Every trial is a pure function of (configuration, master seed, query index,
repeat index): query ``i`` draws its dataset from child ``i`` of the master
seed sequence, and algorithm randomness comes from a separate child of that.
Records are merged in trial order, so runs are reproducible bit for bit.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .. import coreset
from ..core import (
    Answer,
    Dataset,
    OracleLedger,
    Query,
    QueryKind,
    core_set,
    ground_truth_oracle,
)
from ..pbd import phi_from_noise
from ..pqa import pqa_pt_k, pqa_rt_k
from ..pqe import NoiseModel, pqe
from ..refcheck import wilson_interval
from .synth import Scenario, synth_dataset

DEFAULT_GAMMA = 0.95
DEFAULT_DELTA = 0.1
DEFAULT_RADIUS = 0.9
DEFAULT_PERTURBS = (-0.2, -0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2)
CSC_MODES = ("exact", "s1", "m1", "rand-s", "rand-sm")
MAX_CLOSURE_ATTEMPTS = 50


@dataclass
class RunReport:
    records: list[dict]
    aggregates: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"config": self.config, "aggregates": self.aggregates}


# --- seeding -------------------------------------------------------------

def query_seeds(seed: int, queries: int, repeats: int = 1):
    """(data seed, [algorithm seed per repeat]) for each query index."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(queries):
        data, algo = child.spawn(2)
        out.append((data, algo.spawn(repeats)))
    return out


# --- evaluation ----------------------------------------------------------

class Truth:
    """Ground-truth neighbor structure of one dataset."""

    def __init__(self, ds: Dataset, radius: float):
        self.ds = ds
        self.mask = ds.neighbor_mask(radius)
        self.hits = np.concatenate(([0], np.cumsum(self.mask, dtype=np.int64)))
        self.total = int(self.hits[-1])
        self.neighbors = frozenset(ds.ids[self.mask].tolist())

    def counts(self, ans: Answer) -> tuple[int, int]:
        if ans.prefix_k is not None:
            return int(self.hits[ans.prefix_k]), ans.prefix_k
        return len(ans.member_ids & self.neighbors), len(ans.member_ids)

    def evaluate_counts(self, hit: int, size: int, kind: QueryKind, gamma: float) -> dict:
        precision = 1.0 if size == 0 else hit / size
        recall = 1.0 if self.total == 0 else hit / self.total
        denom = size if kind is QueryKind.PT else self.total
        valid = denom == 0 or Fraction(hit, denom) >= Fraction(str(gamma))
        cr = recall if kind is QueryKind.PT else precision
        return {"valid": bool(valid), "precision": precision, "recall": recall, "cr": cr}

    def evaluate(self, ans: Answer, kind: QueryKind, gamma: float) -> dict:
        hit, size = self.counts(ans)
        return {"size": size, **self.evaluate_counts(hit, size, kind, gamma)}


def _record(experiment, algorithm, kind, query, repeat, **fields) -> dict:
    return {"experiment": experiment, "algorithm": algorithm, "kind": str(kind.value),
            "query": query, "repeat": repeat, **fields}


# --- aggregation -----------------------------------------------------------

SUMMARY_KEYS = ("experiment", "algorithm", "kind", "mode", "perturb")


def aggregate(records: Sequence[dict], keys: Sequence[str] = SUMMARY_KEYS) -> list[dict]:
    """Group records and summarize success, CR and oracle usage per group.

    Also splits the success variance into a between-query part (variance of
    per-query success rates) and a within-query part (mean Bernoulli variance
    of repeats of the same query).
    """
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault(tuple(r.get(k) for k in keys), []).append(r)
    out = []
    for gkey, rows in groups.items():
        n = len(rows)
        wins = sum(bool(r["valid"]) for r in rows)
        lo, hi = wilson_interval(wins, n)
        per_query: dict = {}
        for r in rows:
            per_query.setdefault(r["query"], []).append(float(bool(r["valid"])))
        rates = np.array([np.mean(v) for v in per_query.values()])
        within = np.array([np.var(v) for v in per_query.values()])
        row = {k: v for k, v in zip(keys, gkey) if v is not None}
        row.update({
            "trials": n,
            "success_rate": wins / n,
            "ci99_low": lo,
            "ci99_high": hi,
            "mean_cr": float(np.mean([r["cr"] for r in rows])),
            "mean_precision": float(np.mean([r["precision"] for r in rows])),
            "mean_recall": float(np.mean([r["recall"] for r in rows])),
            "mean_oracle_calls": float(np.mean([r["oracle_calls"] for r in rows])),
            "between_query_var": float(np.var(rates)),
            "within_query_var": float(np.mean(within)),
        })
        out.append(row)
    return out


def _map(fn: Callable, jobs: list, workers: int) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _flatten(chunks: Iterable[list]) -> list:
    return [r for chunk in chunks for r in chunk]


# --- PQA perturbation ------------------------------------------------------

def perturbed_k(k_star: int, perturb: float, n: int) -> int:
    return min(n, max(0, math.floor((1 + perturb) * k_star + 0.5)))


def _pqa_query(job) -> list[dict]:
    qi, data_seed, scenario, gamma, delta, perturbs, kinds = job
    ds = synth_dataset(scenario, data_seed)
    truth = Truth(ds, scenario.radius)
    phis = phi_from_noise(ds, scenario.radius, NoiseModel(scenario.noise_sigma).cdf)
    out = []
    for kind in kinds:
        k_star = pqa_pt_k(phis, gamma, delta) if kind is QueryKind.PT else pqa_rt_k(phis, gamma, delta)
        for p in perturbs:
            k = perturbed_k(k_star, p, len(ds))
            hit = int(truth.hits[k])
            out.append(_record("pqa-perturb", "pqa", kind, qi, 0, perturb=p, k_star=k_star, k=k,
                               size=k, oracle_calls=0,
                               **truth.evaluate_counts(hit, k, kind, gamma)))
    return out


def experiment_pqa_perturb(scenario: Scenario, gamma: float = DEFAULT_GAMMA, delta: float = DEFAULT_DELTA,
                           perturbs: Sequence[float] = DEFAULT_PERTURBS,
                           kinds: Sequence[QueryKind] = (QueryKind.RT, QueryKind.PT),
                           queries: int = 200, seed: int = 0, workers: int = 1) -> RunReport:
    """Return top-(1+perturb)*k* instead of PQA's k* and score each variant.

    The noise law used to build phi is the one that generated the data, so
    the proxy-quality assumption holds exactly.
    """
    if scenario.noise_sigma <= 0:
        raise ValueError("perturbation experiment needs noise_sigma > 0")
    kinds = [QueryKind(k) for k in kinds]
    jobs = [(qi, d, scenario, gamma, delta, tuple(perturbs), kinds)
            for qi, (d, _) in enumerate(query_seeds(seed, queries))]
    records = _flatten(_map(_pqa_query, jobs, workers))
    config = {"experiment": "pqa-perturb", "scenario": asdict(scenario), "gamma": gamma,
              "delta": delta, "perturbs": list(perturbs), "kinds": [k.value for k in kinds],
              "queries": queries, "seed": seed}
    return RunReport(records, aggregate(records), config)


# --- CSC -------------------------------------------------------------------

def closed_dataset(scenario: Scenario, data_seed, q: Query, require_closed: bool):
    """First dataset drawn from ``data_seed``'s children whose core set is closed for ``q``."""
    attempts = data_seed.spawn(MAX_CLOSURE_ATTEMPTS) if require_closed else [data_seed]
    for attempt, s in enumerate(attempts):
        ds = synth_dataset(scenario, s)
        truth = Truth(ds, q.radius)
        C, c, closed = core_set(ds, q, truth.neighbors)
        if (closed and c >= 1) or not require_closed:
            return ds, truth, c, closed, attempt
    return ds, truth, c, closed, attempt


def _plan_for(mode: str, n: int, c: int, delta: float, rng) -> coreset.SamplePlan:
    if mode == "rand-s":
        return coreset.rand_s_plan(n, c, delta, rng)
    if mode == "rand-sm":
        return coreset.rand_sm_plan(n, c, delta, rng)
    return coreset.make_plan(n, c, delta, mode)


def _csc_query(job) -> list[dict]:
    qi, data_seed, algo_seeds, scenario, gamma, delta, modes, kinds, require_closed, timing = job
    out = []
    for kind in kinds:
        q = Query(kind, gamma, delta, scenario.radius)
        ds, truth, c, closed, attempt = closed_dataset(scenario, data_seed, q, require_closed)
        if c < 1:
            continue
        oracle = ground_truth_oracle(ds)
        for rep, algo_seed in enumerate(algo_seeds):
            mode_seeds = algo_seed.spawn(len(modes))
            for mode, mseed in zip(modes, mode_seeds):
                rng = np.random.default_rng(mseed)
                t0 = time.process_time()
                plan = _plan_for(mode, len(ds), c, delta, rng)
                plan_cpu = time.process_time() - t0
                ledger = OracleLedger()
                ans = coreset.run_plan(ds, q, plan, oracle, ledger, rng, "csc")
                rec = _record("csc", "csc", kind, qi, rep, mode=mode, c=c, closed=closed,
                              attempt=attempt, s=plan.s, m=plan.m, predicted_eoc=plan.predicted_eoc,
                              fallback=ans.diagnostics["fallback"], k=ans.prefix_k,
                              oracle_calls=ans.oracle_calls, **truth.evaluate(ans, kind, gamma))
                if timing:
                    rec["plan_cpu_s"] = plan_cpu
                out.append(rec)
    return out


def experiment_csc(scenario: Scenario, gamma: float = DEFAULT_GAMMA, delta: float = DEFAULT_DELTA,
                   modes: Sequence[str] = CSC_MODES,
                   kinds: Sequence[QueryKind] = (QueryKind.RT, QueryKind.PT),
                   queries: int = 50, repeats: int = 10, seed: int = 0,
                   require_closed: bool = True, timing: bool = False, workers: int = 1) -> RunReport:
    """CSC with the true core set size under every planning mode and the random baselines.

    Plan CPU time is recorded only with ``timing=True`` since it varies run to run.
    """
    for m in modes:
        if m not in CSC_MODES:
            raise ValueError(f"unknown CSC mode {m!r}")
    kinds = [QueryKind(k) for k in kinds]
    jobs = [(qi, d, a, scenario, gamma, delta, tuple(modes), kinds, require_closed, timing)
            for qi, (d, a) in enumerate(query_seeds(seed, queries, repeats))]
    records = _flatten(_map(_csc_query, jobs, workers))
    aggs = aggregate(records)
    if timing:
        for row in aggs:
            sel = [r["plan_cpu_s"] for r in records
                   if r["kind"] == row["kind"] and r["mode"] == row["mode"]]
            row["mean_plan_cpu_s"] = float(np.mean(sel))
    config = {"experiment": "csc", "scenario": asdict(scenario), "gamma": gamma, "delta": delta,
              "modes": list(modes), "kinds": [k.value for k in kinds], "queries": queries,
              "repeats": repeats, "seed": seed, "require_closed": require_closed}
    return RunReport(records, aggs, config)


# --- CSE / PQE -------------------------------------------------------------

@dataclass(frozen=True)
class CSEParams:
    delta_r: float = coreset.DEFAULT_DELTA_R
    eps_r: float = coreset.DEFAULT_EPS_R
    b_prime: int = coreset.DEFAULT_B_PRIME
    eps_p: float = coreset.DEFAULT_EPS_P
    mode: str = "m1"
    b: int = 100
    sigma0: float = 0.3


def _cse_query(job) -> list[dict]:
    qi, data_seed, algo_seeds, scenario, gamma, delta, kinds, algos, params, require_closed = job
    out = []
    for kind in kinds:
        q = Query(kind, gamma, delta, scenario.radius)
        ds, truth, c, closed, attempt = closed_dataset(scenario, data_seed, q, require_closed)
        oracle = ground_truth_oracle(ds)
        for rep, algo_seed in enumerate(algo_seeds):
            for algo, aseed in zip(algos, algo_seed.spawn(len(algos))):
                ledger = OracleLedger()
                if algo == "cse":
                    ans = coreset.cse(ds, q, oracle, ledger, aseed, delta_r=params.delta_r,
                                      epsilon_r=params.eps_r, b_prime=params.b_prime,
                                      epsilon_p=params.eps_p, mode=params.mode)
                elif algo == "pqe":
                    ans = pqe(ds, q, min(params.b, len(ds)), params.sigma0, oracle, ledger, aseed)
                else:
                    raise ValueError(f"unknown algorithm {algo!r}")
                extra = {k: v for k, v in ans.diagnostics.items()
                         if k in ("branch", "c_lower", "c_hat", "k_hat", "mu_hat", "sigma", "s", "m")}
                out.append(_record("cse", algo, kind, qi, rep, c=c, closed=closed, k=ans.prefix_k,
                                   oracle_calls=ans.oracle_calls, **extra,
                                   **truth.evaluate(ans, kind, gamma)))
    return out


def experiment_cse(scenario: Scenario, gamma: float = DEFAULT_GAMMA, delta: float = DEFAULT_DELTA,
                   kinds: Sequence[QueryKind] = (QueryKind.RT, QueryKind.PT),
                   algos: Sequence[str] = ("cse",), params: CSEParams = CSEParams(),
                   queries: int = 50, repeats: int = 10, seed: int = 0,
                   require_closed: bool = False, workers: int = 1) -> RunReport:
    kinds = [QueryKind(k) for k in kinds]
    jobs = [(qi, d, a, scenario, gamma, delta, kinds, tuple(algos), params, require_closed)
            for qi, (d, a) in enumerate(query_seeds(seed, queries, repeats))]
    records = _flatten(_map(_cse_query, jobs, workers))
    config = {"experiment": "cse", "scenario": asdict(scenario), "gamma": gamma, "delta": delta,
              "kinds": [k.value for k in kinds], "algos": list(algos), "params": asdict(params),
              "queries": queries, "repeats": repeats, "seed": seed, "require_closed": require_closed}
    return RunReport(records, aggregate(records), config)
