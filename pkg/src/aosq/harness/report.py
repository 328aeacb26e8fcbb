"""Aggregate tables from newline-delimited JSON run records."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .experiments import SUMMARY_KEYS, aggregate

REQUIRED_FIELDS = ("algorithm", "kind", "query", "valid", "precision", "recall", "cr", "oracle_calls")
COLUMNS = ("experiment", "algorithm", "kind", "mode", "perturb", "trials", "success_rate",
           "ci99_low", "ci99_high", "mean_cr", "mean_precision", "mean_recall",
           "mean_oracle_calls", "between_query_var", "within_query_var")


class SchemaError(ValueError):
    """A run record is missing a required field or has the wrong type."""


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6g}"
    return str(value)


def _check(rec, where: str) -> dict:
    if not isinstance(rec, dict):
        raise SchemaError(f"{where}: record is not a JSON object")
    missing = [k for k in REQUIRED_FIELDS if k not in rec]
    if missing:
        raise SchemaError(f"{where}: missing fields {missing}")
    if not isinstance(rec["valid"], bool):
        raise SchemaError(f"{where}: 'valid' must be a boolean")
    for k in ("precision", "recall", "cr", "oracle_calls"):
        if isinstance(rec[k], bool) or not isinstance(rec[k], (int, float)):
            raise SchemaError(f"{where}: {k!r} must be numeric")
    return rec


def read_records(paths: Iterable[str | Path]) -> list[dict]:
    out = []
    for path in paths:
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise OSError(f"cannot read run file {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            out.append(_check(rec, f"{path}:{lineno}"))
    return out


def table(records: Sequence[dict]) -> list[dict]:
    """Aggregate rows with every column present, in a fixed order."""
    rows = aggregate(records, SUMMARY_KEYS) if records else []
    return [{c: row.get(c) for c in COLUMNS} for row in rows]


def render(rows: Sequence[dict], fmt_name: str = "csv") -> str:
    if fmt_name == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([fmt(row[c]) for c in COLUMNS])
        return buf.getvalue()
    if fmt_name == "json":
        def conv(v):
            return float(fmt(v)) if isinstance(v, float) else v
        data = {"columns": list(COLUMNS),
                "rows": [{c: conv(row[c]) for c in COLUMNS} for row in rows]}
        return json.dumps(data, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt_name!r}")


def report(paths: Iterable[str | Path], fmt_name: str = "csv") -> str:
    return render(table(read_records(paths)), fmt_name)
