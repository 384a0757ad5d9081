"""Server-side detection: distance reports and Krum / multi-Krum scoring.

Model ids are positional over ``benign + malicious`` in upload order, so
ids ``0 .. I-1`` are benign clients and ``I .. I+J-1`` are attackers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation
from .fl import GlobalModel
from .linalg import euclidean_distance

MODES = ("observe", "krum", "multi_krum")


@dataclass
class DetectionReport:
    round: int
    per_model_distance: dict[int, float]
    krum_scores: dict[int, float] = field(default_factory=dict)
    flagged: set[int] = field(default_factory=set)
    filter_mode: str = "observe"

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "per_model_distance": {str(k): v for k, v in self.per_model_distance.items()},
            "krum_scores": {str(k): v for k, v in self.krum_scores.items()},
            "flagged": sorted(self.flagged),
            "filter_mode": self.filter_mode,
        }


def distance_report(models: Sequence[np.ndarray], global_prev: GlobalModel, round: int | None = None) -> DetectionReport:
    if len(models) == 0:
        raise ContractViolation("distance_report needs at least one model")
    dist = {i: euclidean_distance(w, global_prev.weights) for i, w in enumerate(models)}
    return DetectionReport(global_prev.round + 1 if round is None else round, dist)


def krum_scores(models: Sequence[np.ndarray], f: int) -> np.ndarray:
    """Sum of squared distances from each model to its ``n - f - 2`` nearest others."""
    n = len(models)
    if f < 0:
        raise ConfigError("Krum f must be non-negative")
    if n < 2 * f + 3:
        raise ConfigError(f"Krum needs n >= 2f + 3 models: n={n}, f={f}, bound={2 * f + 3}")
    x = np.vstack([np.asarray(w, dtype=np.float64) for w in models])
    sq = np.sum(x * x, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    np.fill_diagonal(d2, np.inf)
    near = np.sort(d2, axis=1)[:, : n - f - 2]
    return near.sum(axis=1)


def krum_select(models: Sequence[np.ndarray], f: int, m: int = 1) -> tuple[list[int], np.ndarray]:
    """Ids of the ``m`` lowest-scoring models (ties to the lower id) and all scores."""
    scores = krum_scores(models, f)
    if not 1 <= m <= len(models):
        raise ConfigError(f"multi-Krum m={m} must lie in [1, {len(models)}]")
    order = np.argsort(scores, kind="stable")
    return sorted(int(i) for i in order[:m]), scores


@dataclass
class KrumDefense:
    """Scores every upload each round; filters only in ``krum``/``multi_krum`` mode.

    A model is *flagged* when it falls outside the multi-Krum keep set of
    size ``n - f``, whatever the mode.
    """

    f: int
    mode: str = "observe"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown defense mode {self.mode!r}; expected one of {MODES}")

    def inspect(self, benign, malicious, global_prev: GlobalModel, round: int):
        models = list(benign) + list(malicious)
        report = distance_report(models, global_prev, round)
        report.filter_mode = self.mode
        n = len(models)
        keep = np.ones(n)
        if n >= 2 * self.f + 3:
            kept, scores = krum_select(models, self.f, n - self.f)
            report.krum_scores = {i: float(s) for i, s in enumerate(scores)}
            report.flagged = set(range(n)) - set(kept)
            if self.mode == "krum":
                keep = np.zeros(n)
                keep[int(np.argmin(scores))] = 1.0
            elif self.mode == "multi_krum":
                keep = np.zeros(n)
                keep[kept] = 1.0
        elif self.mode != "observe":
            raise ConfigError(f"Krum needs n >= 2f + 3 models: n={n}, f={self.f}, bound={2 * self.f + 3}")
        nb = len(benign)
        return keep[:nb], keep[nb:], report
