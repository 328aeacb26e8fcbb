"""Synthetic scenarios: uniform (or given) proxy distances, oracle = clipped proxy + normal noise."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import Dataset, ObjectRecord, ValidationError, build_index, read_dataset, write_dataset

PROXY_LAWS = ("uniform", "file")


@dataclass(frozen=True)
class Scenario:
    n: int = 2000
    proxy_law: str = "uniform"
    noise_sigma: float = 0.1
    clip: tuple[float, float] = (0.0, 1.0)
    radius: float = 0.9
    seed: int = 0
    proxy_file: Optional[str] = None

    def __post_init__(self):
        if self.proxy_law not in PROXY_LAWS:
            raise ValidationError(f"unknown proxy law {self.proxy_law!r}")
        if self.proxy_law == "file" and not self.proxy_file:
            raise ValidationError("proxy_law='file' needs proxy_file")
        if self.proxy_law == "uniform" and self.n < 1:
            raise ValidationError("scenario needs n >= 1")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        lo, hi = self.clip
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValidationError(f"clip range {self.clip} must sit inside [0,1]")


def synth_records(scenario: Scenario, seed=None) -> list[ObjectRecord]:
    """Records for one draw of the scenario; ``seed`` defaults to ``scenario.seed``."""
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    if scenario.proxy_law == "uniform":
        ids = np.arange(scenario.n)
        proxy = rng.uniform(0.0, 1.0, scenario.n)
    else:
        base = read_dataset(scenario.proxy_file)
        ids, proxy = np.asarray(base.ids), np.asarray(base.proxy)
    if scenario.noise_sigma > 0:
        oracle = np.clip(proxy + rng.normal(0.0, scenario.noise_sigma, len(proxy)), *scenario.clip)
    else:
        oracle = proxy.copy()
    return [ObjectRecord(int(i), float(p), float(o)) for i, p, o in zip(ids, proxy, oracle)]


def synth_dataset(scenario: Scenario, seed=None) -> Dataset:
    return build_index(synth_records(scenario, seed))


def synth_generate(scenario: Scenario, path: str | Path) -> Path:
    path = Path(path)
    write_dataset(synth_records(scenario), path)
    return path
