"""Domain model: objects, proxy ordering, queries, answers and oracle accounting.

Objects are ranked by ascending proxy distance (ties by ascending id). Ranks are
1-based, so ``prefix(ds, k)`` is the set of objects with rank ``<= k``.
"""

from __future__ import annotations

import csv
import enum
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

# |x - round(x)| below this (relative to max(1, |x|)) counts as an integer.
SNAP_TOL = 1e-12


class ValidationError(ValueError):
    """Input violates a domain invariant."""


class MissingGroundTruthError(ValidationError):
    """An operation needs oracle distances the dataset does not carry."""


def snap(x: float) -> float:
    """Round ``x`` to the nearest integer when it is within float noise of one."""
    r = round(x)
    if abs(x - r) <= SNAP_TOL * max(1.0, abs(x)):
        return float(r)
    return x


def ceil_snapped(x: float) -> int:
    return math.ceil(snap(x))


def floor_snapped(x: float) -> int:
    return math.floor(snap(x))


class QueryKind(str, enum.Enum):
    PT = "PT"
    RT = "RT"


@dataclass(frozen=True)
class ObjectRecord:
    id: int
    proxy_dist: float
    oracle_dist: Optional[float] = None

    def __post_init__(self):
        if int(self.id) != self.id or self.id < 0:
            raise ValidationError(f"object id must be a non-negative integer, got {self.id!r}")
        if not _in_unit(self.proxy_dist):
            raise ValidationError(f"proxy_dist of object {self.id} outside [0,1]: {self.proxy_dist!r}")
        if self.oracle_dist is not None and not _in_unit(self.oracle_dist):
            raise ValidationError(f"oracle_dist of object {self.id} outside [0,1]: {self.oracle_dist!r}")


def _in_unit(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer)) and math.isfinite(x) and 0.0 <= x <= 1.0


@dataclass(frozen=True)
class Query:
    kind: QueryKind
    gamma: float
    delta: float
    radius: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "kind", QueryKind(self.kind))
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in (0,1), got {self.gamma}")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta must lie in (0,1), got {self.delta}")
        if not 0.0 <= self.radius <= 1.0:
            raise ValidationError(f"radius must lie in [0,1], got {self.radius}")

    @property
    def main_measure(self) -> str:
        return "precision" if self.kind is QueryKind.PT else "recall"

    @property
    def complementary_measure(self) -> str:
        return "recall" if self.kind is QueryKind.PT else "precision"


class Dataset:
    """Immutable proxy-sorted collection of objects.

    Arrays are stored in rank order: ``ids[i]`` is the object with rank ``i + 1``.
    ``oracle`` is ``None`` unless every record carries an oracle distance.
    """

    __slots__ = ("ids", "proxy", "oracle", "_rank")

    def __init__(self, ids: np.ndarray, proxy: np.ndarray, oracle: Optional[np.ndarray]):
        for a in (ids, proxy, oracle):
            if a is not None:
                a.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "proxy", proxy)
        object.__setattr__(self, "oracle", oracle)
        object.__setattr__(self, "_rank", {int(x): i + 1 for i, x in enumerate(ids)})

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    def __len__(self) -> int:
        return len(self.ids)

    def rank(self, obj_id: int) -> int:
        """Proxy index I(x) of an object (1-based)."""
        return self._rank[int(obj_id)]

    def ranks(self, obj_ids: Iterable[int]) -> np.ndarray:
        return np.fromiter((self._rank[int(x)] for x in obj_ids), dtype=np.int64)

    @property
    def has_ground_truth(self) -> bool:
        return self.oracle is not None

    def neighbor_mask(self, radius: float) -> np.ndarray:
        """Boolean oracle-neighbor flags in rank order."""
        if self.oracle is None:
            raise MissingGroundTruthError("dataset has no oracle_dist column")
        return self.oracle <= radius

    def neighbors(self, radius: float) -> frozenset:
        return frozenset(int(x) for x in self.ids[self.neighbor_mask(radius)])

    def records(self) -> list[ObjectRecord]:
        if self.oracle is None:
            return [ObjectRecord(int(i), float(p)) for i, p in zip(self.ids, self.proxy)]
        return [ObjectRecord(int(i), float(p), float(o)) for i, p, o in zip(self.ids, self.proxy, self.oracle)]

    def subset(self, obj_ids: Iterable[int]) -> "Dataset":
        """Restriction to ``obj_ids``; relative order matches the global index."""
        pos = np.sort(self.ranks(obj_ids)) - 1
        oracle = None if self.oracle is None else self.oracle[pos].copy()
        return Dataset(self.ids[pos].copy(), self.proxy[pos].copy(), oracle)


def build_index(records: Sequence[ObjectRecord]) -> Dataset:
    ids = np.array([r.id for r in records], dtype=np.int64)
    proxy = np.array([r.proxy_dist for r in records], dtype=np.float64)
    if len(np.unique(ids)) != len(ids):
        raise ValidationError("object ids must be unique")
    if len(records) and not (np.all(np.isfinite(proxy)) and proxy.min() >= 0.0 and proxy.max() <= 1.0):
        raise ValidationError("proxy_dist must lie in [0,1]")
    has_oracle = len(records) > 0 and all(r.oracle_dist is not None for r in records)
    # lexsort: last key is primary
    order = np.lexsort((ids, proxy))
    oracle = None
    if has_oracle:
        oracle = np.array([r.oracle_dist for r in records], dtype=np.float64)[order]
    return Dataset(ids[order], proxy[order], oracle)


def from_arrays(proxy: Sequence[float], oracle: Optional[Sequence[float]] = None,
                ids: Optional[Sequence[int]] = None) -> Dataset:
    """Build a dataset from parallel arrays (ids default to 0..n-1)."""
    n = len(proxy)
    ids = range(n) if ids is None else ids
    if oracle is None:
        recs = [ObjectRecord(int(i), float(p)) for i, p in zip(ids, proxy)]
    else:
        recs = [ObjectRecord(int(i), float(p), float(o)) for i, p, o in zip(ids, proxy, oracle)]
    return build_index(recs)


def prefix(ds: Dataset, k: int) -> frozenset:
    """The ``k`` proxy-nearest objects, D_k."""
    if not 0 <= k <= len(ds):
        raise ValidationError(f"prefix length {k} outside [0, {len(ds)}]")
    return frozenset(int(x) for x in ds.ids[:k])


def measure(S: Iterable[int], neighbors: Iterable[int], which: str) -> float:
    """Precision or recall of ``S`` against the neighbor set.

    Empty ``S`` has precision 1 and an empty neighbor set gives recall 1.
    """
    S = set(S)
    nn = set(neighbors)
    hit = len(S & nn)
    if which == "precision":
        return 1.0 if not S else hit / len(S)
    if which == "recall":
        return 1.0 if not nn else hit / len(nn)
    raise ValueError(f"unknown measure {which!r}")


def prefix_measures(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall of every prefix D_0..D_n given neighbor flags in rank order."""
    hits = np.concatenate(([0], np.cumsum(mask, dtype=np.int64)))
    k = np.arange(len(hits))
    total = hits[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(k == 0, 1.0, hits / np.maximum(k, 1))
        recall = np.ones(len(hits)) if total == 0 else hits / total
    return precision, recall


def meets_target(value_num: int, value_den: int, gamma: float) -> bool:
    """``value_num / value_den >= gamma`` with gamma read as its shortest decimal."""
    if value_den == 0:
        return True
    return value_num >= ceil_snapped(value_den * gamma)


def core_set(ds: Dataset, q: Query, neighbors: Iterable[int]) -> tuple[frozenset, int, bool]:
    """Oracle neighbors whose proxy prefix is a valid answer, their count, and closure."""
    nn = set(int(x) for x in neighbors)
    n = len(ds)
    mask = np.zeros(n, dtype=bool)
    if nn:
        mask[ds.ranks(nn) - 1] = True
    hits = np.cumsum(mask, dtype=np.int64)
    total = int(hits[-1]) if n else 0
    members = []
    flags = []
    for pos in np.flatnonzero(mask):
        k = pos + 1
        if q.kind is QueryKind.PT:
            ok = meets_target(int(hits[pos]), k, q.gamma)
        else:
            ok = meets_target(int(hits[pos]), total, q.gamma)
        flags.append(ok)
        if ok:
            members.append(int(ds.ids[pos]))
    # RT: every neighbor after a core member is in the core; PT: every neighbor before.
    if not any(flags):
        closed = True
    elif q.kind is QueryKind.RT:
        closed = all(flags[flags.index(True):])
    else:
        last = len(flags) - 1 - flags[::-1].index(True)
        closed = all(flags[:last + 1])
    C = frozenset(members)
    return C, len(C), closed


class OracleLedger:
    """Distinct oracle calls made during one run. Thread-safe."""

    def __init__(self):
        self._probed: set[int] = set()
        self._lock = threading.Lock()

    def record(self, ids: Iterable[int]) -> None:
        with self._lock:
            self._probed.update(int(i) for i in ids)

    @property
    def probed(self) -> frozenset:
        with self._lock:
            return frozenset(self._probed)

    @property
    def count(self) -> int:
        with self._lock:
            return len(self._probed)


Oracle = Callable[[np.ndarray], np.ndarray]


def ground_truth_oracle(ds: Dataset) -> Oracle:
    """Oracle answering from the dataset's hidden oracle distances."""
    if ds.oracle is None:
        raise MissingGroundTruthError("dataset has no oracle_dist column")
    lookup = dict(zip(ds.ids.tolist(), ds.oracle.tolist()))

    def oracle(ids: np.ndarray) -> np.ndarray:
        return np.array([lookup[int(i)] for i in ids], dtype=np.float64)

    return oracle


def probe(oracle: Oracle, ledger: OracleLedger, ids: np.ndarray) -> np.ndarray:
    """Query the oracle for ``ids`` and charge the ledger."""
    ids = np.asarray(ids, dtype=np.int64)
    dists = np.asarray(oracle(ids), dtype=np.float64)
    ledger.record(ids.tolist())
    return dists


@dataclass(frozen=True)
class Answer:
    member_ids: frozenset
    prefix_k: Optional[int]
    oracle_calls: int
    algorithm: str
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.member_ids)


def prefix_answer(ds: Dataset, k: int, oracle_calls: int, algorithm: str, **diagnostics) -> Answer:
    return Answer(prefix(ds, k), k, oracle_calls, algorithm, diagnostics)


# --- dataset files -------------------------------------------------------

def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValidationError(f"{path}: empty file")
            header = [h.strip() for h in header]
            if header not in (["id", "proxy_dist"], ["id", "proxy_dist", "oracle_dist"]):
                raise ValidationError(f"{path}: bad header {header!r}")
            with_oracle = len(header) == 3
            records = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields")
                try:
                    oid = int(row[0])
                    p = float(row[1])
                    o = float(row[2]) if with_oracle else None
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from exc
                try:
                    records.append(ObjectRecord(oid, p, o))
                except ValidationError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    return build_index(records)


def write_dataset(records: Sequence[ObjectRecord], path: str | Path) -> None:
    path = Path(path)
    with_oracle = bool(records) and records[0].oracle_dist is not None
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "proxy_dist", "oracle_dist"] if with_oracle else ["id", "proxy_dist"])
            for r in records:
                row = [r.id, repr(float(r.proxy_dist))]
                if with_oracle:
                    row.append(repr(float(r.oracle_dist)))
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc}") from exc
