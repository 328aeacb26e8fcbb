"""Poisson-binomial machinery over membership probabilities.

``phi[i]`` is the probability that the object of rank ``i + 1`` is an oracle
neighbor. A probability mass over neighbor counts is a 1-d array ``p`` with
``p[k] = Pr[N_S = k]`` for ``k = 0..|S|``; it is accumulated by direct
convolution in extended precision.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import SNAP_TOL, Dataset, ValidationError, ceil_snapped

MASS_DTYPE = np.longdouble
NEG_SLACK = 1e-12


def as_phis(phis: Sequence[float]) -> np.ndarray:
    arr = np.asarray(phis, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError("membership probabilities must be one-dimensional")
    if arr.size and not (np.all(np.isfinite(arr)) and arr.min() >= 0.0 and arr.max() <= 1.0):
        raise ValidationError("membership probabilities must lie in [0,1]")
    return arr


def phi_from_noise(ds: Dataset, r: float, noise_cdf: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """phi_i = noise_cdf(r - proxy_dist_i), in rank order.

    ``noise_cdf`` is tried on the whole array of offsets first and called
    element by element if it only accepts scalars.
    """
    offsets = r - ds.proxy
    try:
        vals = np.asarray(noise_cdf(offsets), dtype=np.float64)
    except (TypeError, ValueError):
        vals = None
    if vals is None or vals.shape != offsets.shape:
        vals = np.array([float(noise_cdf(float(t))) for t in offsets], dtype=np.float64)
    return as_phis(vals)


def _clamp(p: np.ndarray) -> np.ndarray:
    if p.size and p.min() < 0:
        if p.min() < -NEG_SLACK:
            raise ValidationError(f"probability mass entry {float(p.min())} is negative")
        p[p < 0] = 0
    return p


def pns_update(p: np.ndarray, phi_i: float) -> np.ndarray:
    """Mass after adding one object with membership probability ``phi_i``."""
    if not 0.0 <= phi_i <= 1.0:
        raise ValidationError(f"membership probability {phi_i} outside [0,1]")
    p = np.asarray(p, dtype=MASS_DTYPE)
    phi = MASS_DTYPE(phi_i)
    out = np.zeros(len(p) + 1, dtype=MASS_DTYPE)
    out[1:] = p * phi
    out[:-1] += p * (1 - phi)
    return _clamp(out)


def pns(phis: Sequence[float]) -> np.ndarray:
    """Exact mass of the number of neighbors among objects with the given phis."""
    phis = as_phis(phis).astype(MASS_DTYPE)
    p = np.zeros(len(phis) + 1, dtype=MASS_DTYPE)
    p[0] = 1
    # Same recurrence as pns_update, done in place on a preallocated buffer.
    for i, phi in enumerate(phis):
        moved = p[:i + 1] * phi
        p[:i + 1] *= 1 - phi
        p[1:i + 2] += moved
    return _clamp(p)


def prefix_masses(phis: Sequence[float]):
    """Yield the mass of D_k for k = 0, 1, ..., len(phis), incrementally."""
    phis = as_phis(phis)
    p = np.ones(1, dtype=MASS_DTYPE)
    yield p
    for phi in phis:
        p = pns_update(p, float(phi))
        yield p


def pos_mp(p: np.ndarray, gamma: float) -> float:
    """Pr[precision(S) >= gamma] where ``p`` is the mass of N_S."""
    size = len(p) - 1
    lo = ceil_snapped(size * gamma)
    return float(np.sum(p[lo:]))


def _recall_thresholds(j: np.ndarray, gamma: float) -> np.ndarray:
    v = j * (1.0 - gamma) / gamma
    r = np.round(v)
    v = np.where(np.abs(v - r) <= SNAP_TOL * np.maximum(1.0, np.abs(v)), r, v)
    return np.floor(v).astype(np.int64)


def pos_mr(p_S: np.ndarray, p_Sbar: np.ndarray, gamma: float) -> float:
    """Pr[recall(S) >= gamma] from the masses of N_S and N_{D \\ S}."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    cdf_bar = np.cumsum(np.asarray(p_Sbar, dtype=MASS_DTYPE))
    j = np.arange(len(p_S))
    kmax = np.minimum(_recall_thresholds(j, gamma), len(cdf_bar) - 1)
    return float(np.sum(np.asarray(p_S, dtype=MASS_DTYPE) * cdf_bar[kmax]))


def expected_precision(p: np.ndarray, k: int) -> float:
    if k < 1 or k != len(p) - 1:
        raise ValidationError(f"expected precision needs |S| = k >= 1 (k={k}, |S|={len(p) - 1})")
    return float(np.dot(np.arange(len(p), dtype=MASS_DTYPE), p) / k)


def expected_recall(p_S: np.ndarray, p_Sbar: np.ndarray) -> float:
    """E[N_S / (N_S + N_Sbar)] with the 0/0 case counted as recall 1."""
    j = np.arange(len(p_S), dtype=np.float64)[:, None]
    k = np.arange(len(p_Sbar), dtype=np.float64)[None, :]
    tot = j + k
    rho = np.where(tot == 0, 1.0, j / np.where(tot == 0, 1.0, tot))
    joint = np.outer(np.asarray(p_S, dtype=MASS_DTYPE), np.asarray(p_Sbar, dtype=MASS_DTYPE))
    return float(np.sum(joint * rho))


def pos(p_S: np.ndarray, p_Sbar: np.ndarray, kind, gamma: float) -> float:
    """Success probability for a query kind ("PT" or "RT")."""
    return pos_mp(p_S, gamma) if str(getattr(kind, "value", kind)) == "PT" else pos_mr(p_S, p_Sbar, gamma)


def expected_cr(p_S: np.ndarray, p_Sbar: np.ndarray, kind) -> float:
    """Expected complementary rate: recall for PT, precision for RT (1 for empty S)."""
    if str(getattr(kind, "value", kind)) == "PT":
        return expected_recall(p_S, p_Sbar)
    size = len(p_S) - 1
    return 1.0 if size == 0 else expected_precision(p_S, size)
