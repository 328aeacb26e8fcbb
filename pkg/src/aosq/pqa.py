"""Zero-oracle-call answers when the proxy/oracle noise law is known.

Both routines return rank cut-offs; wrap them with :func:`pqa` to get an
:class:`~aosq.core.Answer` over a dataset.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import Answer, Dataset, Query, QueryKind, prefix
from .pbd import as_phis, pns, pns_update, pos_mp, pos_mr


def pqa_pt_k(phis: Sequence[float], gamma: float, delta: float) -> int:
    """Largest k with Pr[precision(D_k) >= gamma] >= 1 - delta (0 always qualifies)."""
    phis = as_phis(phis)
    p = np.ones(1, dtype=np.longdouble)
    k_star = 0
    for i, phi in enumerate(phis, start=1):
        p = pns_update(p, float(phi))
        if pos_mp(p, gamma) >= 1 - delta:
            k_star = i
    return k_star


def _pos_mr_prefix(phis: np.ndarray, k: int, gamma: float) -> float:
    return pos_mr(pns(phis[:k]), pns(phis[k:]), gamma)


def pqa_rt_bounds(phis: Sequence[float], gamma: float, delta: float) -> tuple[int, int]:
    """Return (k_lower, k_star) for a recall-target query.

    k_lower is the smallest prefix length meeting the recall target w.h.p.
    (binary search; valid because that probability is monotone in k), and
    k_star maximizes expected precision over [k_lower, |D|], smallest on ties.
    The empty prefix counts as precision 1.
    """
    phis = as_phis(phis)
    n = len(phis)
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if _pos_mr_prefix(phis, mid, gamma) < 1 - delta:
            lo = mid + 1
        else:
            hi = mid
    k_lower = lo
    if k_lower == 0:
        return 0, 0
    # E[precision(D_k)] = E[N_{D_k}] / k = (phi_1 + ... + phi_k) / k by linearity.
    ks = np.arange(k_lower, n + 1)
    exp_prec = np.cumsum(phis.astype(np.longdouble))[ks - 1] / ks
    k_star = int(ks[np.argmax(exp_prec)])  # argmax keeps the first maximum
    return k_lower, k_star


def pqa_rt_k(phis: Sequence[float], gamma: float, delta: float) -> int:
    return pqa_rt_bounds(phis, gamma, delta)[1]


def pqa_pt(ds: Dataset, phis: Sequence[float], gamma: float, delta: float) -> Answer:
    k = pqa_pt_k(phis, gamma, delta)
    return Answer(prefix(ds, k), k, 0, "pqa", {"k_star": k})


def pqa_rt(ds: Dataset, phis: Sequence[float], gamma: float, delta: float) -> Answer:
    k_lower, k = pqa_rt_bounds(phis, gamma, delta)
    return Answer(prefix(ds, k), k, 0, "pqa", {"k_lower": k_lower, "k_star": k})


def pqa(ds: Dataset, q: Query, phis: Sequence[float]) -> Answer:
    if len(phis) != len(ds):
        raise ValueError(f"got {len(phis)} membership probabilities for {len(ds)} objects")
    if q.kind is QueryKind.PT:
        return pqa_pt(ds, phis, q.gamma, q.delta)
    return pqa_rt(ds, phis, q.gamma, q.delta)
