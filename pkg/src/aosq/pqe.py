"""Calibrate a zero-mean normal noise model from a few probes, then run PQA."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .core import Answer, Dataset, Oracle, OracleLedger, Query, ValidationError, probe
from .pbd import phi_from_noise
from .pqa import pqa

DEFAULT_SIGMA0 = 0.3


def normal_cdf(x, sigma: float = 1.0):
    """CDF of N(0, sigma) via the complementary error function."""
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) / (sigma * math.sqrt(2.0)))


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    mu: float = 0.0

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValidationError(f"noise scale must be positive, got {self.sigma}")

    def cdf(self, x):
        return normal_cdf(np.asarray(x) - self.mu, self.sigma)


def estimate_noise_scale(ds: Dataset, b: int, sigma0: float, oracle: Oracle,
                         ledger: OracleLedger, seed=None) -> NoiseModel:
    """sigma = sigma0 + population std of (oracle - proxy) over b distinct random objects."""
    n = len(ds)
    if not 0 <= b <= n:
        raise ValidationError(f"probe budget b={b} outside [0, {n}]")
    if b == 0:
        return NoiseModel(sigma0)
    rng = np.random.default_rng(seed)
    pos = np.sort(rng.choice(n, size=b, replace=False))
    residuals = probe(oracle, ledger, ds.ids[pos]) - ds.proxy[pos]
    return NoiseModel(sigma0 + float(np.std(residuals)))


def pqe(ds: Dataset, q: Query, b: int, sigma0: float, oracle: Oracle,
        ledger: OracleLedger, seed=None) -> Answer:
    before = ledger.count
    model = estimate_noise_scale(ds, b, sigma0, oracle, ledger, seed)
    phis = phi_from_noise(ds, q.radius, model.cdf)
    ans = pqa(ds, q, phis)
    return Answer(ans.member_ids, ans.prefix_k, ledger.count - before, "pqe",
                  {**ans.diagnostics, "sigma": model.sigma})
