"""Reference poisoning attacks used as comparison points.

``mp`` replaces the attacker's upload with a model pushed against the mean
benign update. It stands in for a fake-device attack that would need
training data; outputs label it ``mp-surrogate`` so it is never mistaken
for the original construction. ``rmp`` adds scaled Gaussian noise to the
received global model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation
from .fl import GlobalModel
from .linalg import euclidean_distance

MP_LABEL = "mp-surrogate"


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = "rmp"
    rmp_scale: float = 10.0
    mp_push: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mp", "rmp"):
            raise ConfigError(f"unknown baseline attack kind {self.kind!r} (expected mp or rmp)")
        if self.rmp_scale < 0 or self.mp_push < 0:
            raise ConfigError("baseline scale factors must be non-negative")


def mp_attack(eavesdropped: Sequence[np.ndarray], global_model: GlobalModel, cfg: BaselineConfig) -> np.ndarray:
    """``w_G - push * (mean(eavesdropped) - w_G)``.

    The mean is unweighted because the surrogate has no reason to trust
    the sizes other clients claim.
    """
    if len(eavesdropped) == 0:
        raise ContractViolation("mp_attack needs at least one overheard model")
    g = np.asarray(global_model.weights, dtype=np.float64)
    mean = np.mean(np.vstack([np.asarray(w, dtype=np.float64) for w in eavesdropped]), axis=0)
    out = g - cfg.mp_push * (mean - g)
    if not np.all(np.isfinite(out)):
        raise ContractViolation("mp_attack produced non-finite weights")
    return out


def rmp_attack(global_model: GlobalModel, cfg: BaselineConfig, rng: np.random.Generator) -> np.ndarray:
    g = np.asarray(global_model.weights, dtype=np.float64)
    return g + cfg.rmp_scale * rng.standard_normal(g.shape)


@dataclass
class BaselineAttacker:
    """Adapter exposing the baselines through the federation's attacker protocol."""

    index: int
    seed: int = 0
    cfg: BaselineConfig = BaselineConfig()

    @property
    def name(self) -> str:
        return MP_LABEL if self.cfg.kind == "mp" else "rmp"

    def rng(self, round: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, 23, self.index, round])

    def craft(self, eavesdropped, sizes, global_model: GlobalModel, round: int):
        if self.cfg.kind == "mp":
            w = mp_attack(eavesdropped, global_model, self.cfg)
        else:
            w = rmp_attack(global_model, self.cfg, self.rng(round))
        diag = {
            "kind": self.name,
            "d_mal": euclidean_distance(w, global_model.weights),
            "n_eavesdropped": len(eavesdropped),
        }
        return w, diag
