"""Benign federated learning with one-vs-rest linear SVM clients.

A model is a flat float64 vector holding ``classes`` rows of
``[w_1 .. w_dim, intercept]`` (class-major, intercept last in each row).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .data import ClientDataset, Dataset
from .errors import ConfigError, ContractViolation, DegenerateAggregationError
from .linalg import euclidean_distance

logger = logging.getLogger(__name__)


def model_size(classes: int, dim: int) -> int:
    return classes * (dim + 1)


def zeros_model(classes: int, dim: int) -> np.ndarray:
    return np.zeros(model_size(classes, dim))


def as_heads(model: np.ndarray, classes: int) -> np.ndarray:
    model = np.asarray(model, dtype=np.float64)
    if model.ndim != 1 or model.size % classes:
        raise ContractViolation(f"model of size {model.size} cannot hold {classes} class heads")
    return model.reshape(classes, -1)


def _signed_targets(labels: np.ndarray, classes: int) -> np.ndarray:
    y = -np.ones((labels.size, classes))
    y[np.arange(labels.size), labels] = 1.0
    return y


def _check_dims(heads: np.ndarray, data: Dataset) -> None:
    if heads.shape[1] - 1 != data.dim:
        raise ContractViolation(
            f"model expects {heads.shape[1] - 1} features, data has {data.dim}"
        )


def local_loss(model, data: Dataset, alpha: float) -> float:
    """Regularised multi-head hinge loss.

    ``0.5*|w|^2 + mean hinge (summed over heads) + alpha * 0.5*|w|^2``;
    intercepts are not regularised.
    """
    if len(data) == 0:
        raise ContractViolation("local_loss needs at least one sample")
    heads = as_heads(model, data.num_classes)
    _check_dims(heads, data)
    w, b = heads[:, :-1], heads[:, -1]
    margins = _signed_targets(data.labels, data.num_classes) * (data.features @ w.T + b)
    hinge = np.maximum(0.0, 1.0 - margins).sum() / len(data)
    sq = float(np.sum(w * w))
    return 0.5 * sq + hinge + alpha * 0.5 * sq


def local_loss_grad(model, data: Dataset, alpha: float) -> np.ndarray:
    """Subgradient of ``local_loss`` (zero on the hinge kink)."""
    if len(data) == 0:
        raise ContractViolation("local_loss_grad needs at least one sample")
    heads = as_heads(model, data.num_classes)
    _check_dims(heads, data)
    w, b = heads[:, :-1], heads[:, -1]
    y = _signed_targets(data.labels, data.num_classes)
    active = (y * (data.features @ w.T + b)) < 1.0
    coef = np.where(active, y, 0.0) / len(data)
    grad = np.empty_like(heads)
    grad[:, :-1] = (1.0 + alpha) * w - coef.T @ data.features
    grad[:, -1] = -coef.sum(axis=0)
    return grad.ravel()


def predict(model, features: np.ndarray, classes: int) -> np.ndarray:
    heads = as_heads(model, classes)
    return np.argmax(features @ heads[:, :-1].T + heads[:, -1], axis=1)


def evaluate(model, test: Dataset) -> float:
    if len(test) == 0:
        raise ContractViolation("evaluate needs a non-empty test set")
    heads = as_heads(model, test.num_classes)
    _check_dims(heads, test)
    return float(np.mean(predict(model, test.features, test.num_classes) == test.labels))


@dataclass(frozen=True)
class FlConfig:
    clients: int = 5
    attackers: int = 2
    rounds: int = 30
    local_iters: int = 10
    learning_rate: float = 0.001
    reg_coeff: float = 0.01
    batch_size: int = 30
    claimed_size: int | None = None  # None: mean benign size
    jobs: int = 1

    def __post_init__(self):
        if self.clients < 1 or self.rounds < 1 or self.local_iters < 1 or self.batch_size < 1:
            raise ConfigError("clients, rounds, local_iters and batch_size must be positive")
        if self.attackers < 0:
            raise ConfigError("attackers must be non-negative")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 <= self.reg_coeff <= 1.0:
            raise ConfigError("reg_coeff must lie in [0, 1]")
        if self.claimed_size is not None and self.claimed_size < 1:
            raise ConfigError("claimed_size must be positive")


def local_train(model, data: ClientDataset | Dataset, cfg: FlConfig, rng: np.random.Generator) -> np.ndarray:
    """``cfg.local_iters`` epochs of shuffled mini-batch subgradient descent."""
    train = data.train if isinstance(data, ClientDataset) else data
    w = np.array(model, dtype=np.float64)
    _check_dims(as_heads(w, train.num_classes), train)
    n = len(train)
    for _ in range(cfg.local_iters):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = train.subset(order[start : start + cfg.batch_size])
            w -= cfg.learning_rate * local_loss_grad(w, batch, cfg.reg_coeff)
    if not np.all(np.isfinite(w)):
        raise ContractViolation("local training produced non-finite weights")
    return w


@dataclass(frozen=True)
class GlobalModel:
    weights: np.ndarray
    round: int = 0


def aggregation_weights(sizes, claimed, selection) -> tuple[np.ndarray, np.ndarray]:
    """Per-model coefficients D_i*beta_i/D and D'_j/D of the contaminated average."""
    sizes = np.asarray(sizes, dtype=np.float64)
    claimed = np.asarray(claimed, dtype=np.float64).reshape(-1)
    beta = np.asarray(selection, dtype=np.float64)
    if beta.shape != sizes.shape:
        raise ContractViolation(f"selection length {beta.size} != number of benign models {sizes.size}")
    total = float(np.sum(sizes * beta) + np.sum(claimed))
    if total <= 0:
        raise DegenerateAggregationError("no selected benign model and no attacker to aggregate")
    return sizes * beta / total, claimed / total


def aggregate(benign, sizes, malicious=(), claimed=(), selection=None, round: int = 0) -> GlobalModel:
    benign = [np.asarray(w, dtype=np.float64) for w in benign]
    malicious = [np.asarray(w, dtype=np.float64) for w in malicious]
    if len(benign) != len(sizes) or len(malicious) != len(claimed):
        raise ContractViolation("model lists and size lists are not aligned")
    if selection is None:
        selection = np.ones(len(benign))
    wb, wm = aggregation_weights(sizes, claimed, selection)
    shape = (benign or malicious)[0].shape
    out = np.zeros(shape)
    for c, w in zip(wb, benign):
        out += c * w
    for c, w in zip(wm, malicious):
        out += c * w
    return GlobalModel(out, round)


# -------------------------------------------------------------- orchestrator


class Attacker(Protocol):
    name: str

    def craft(self, eavesdropped: Sequence[np.ndarray], sizes: Sequence[int],
              global_model: GlobalModel, round: int) -> tuple[np.ndarray, dict]: ...


class Defense(Protocol):
    def inspect(self, benign: Sequence[np.ndarray], malicious: Sequence[np.ndarray],
                global_prev: GlobalModel, round: int) -> tuple[np.ndarray, np.ndarray, dict]:
        """Return keep-masks for benign and malicious models plus a report."""
        ...


@dataclass
class RoundLedger:
    round: int
    global_model: np.ndarray
    benign_models: list[np.ndarray]
    malicious_models: list[np.ndarray]
    selection: np.ndarray  # server-side inclusion of each benign model
    malicious_kept: np.ndarray
    distances: list[float]  # benign then malicious, to the previous global
    global_distance: float
    global_accuracy: float
    per_client_accuracy: list[float]
    malicious_accuracy: list[float]
    client_losses: list[float]  # each benign model on its own training set
    global_loss: float  # size-weighted local losses of the new global model
    attack_diagnostics: list[dict] = field(default_factory=list)
    defense_report: dict | None = None


class Federation:
    """Round-synchronous server plus benign clients.

    Every client trains from the broadcast global model with its own RNG
    stream derived from ``(seed, round, client_id)``, so results do not
    depend on how client training is scheduled across ``cfg.jobs`` threads.
    """

    def __init__(self, clients: Sequence[ClientDataset], test: Dataset, cfg: FlConfig, seed: int = 0):
        if len(clients) != cfg.clients:
            raise ConfigError(f"config expects {cfg.clients} clients, got {len(clients)}")
        self.clients = list(clients)
        self.test = test
        self.cfg = cfg
        self.seed = seed
        self.classes = test.num_classes
        self.global_model = GlobalModel(zeros_model(self.classes, test.dim), 0)
        self.ledger: list[RoundLedger] = []

    @property
    def sizes(self) -> list[int]:
        return [c.size for c in self.clients]

    def claimed_size(self) -> int:
        if self.cfg.claimed_size is not None:
            return self.cfg.claimed_size
        return int(round(float(np.mean(self.sizes))))

    def client_rng(self, client_id: int, round: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, 11, round, client_id])

    def _train_all(self, round: int) -> list[np.ndarray]:
        start = self.global_model.weights

        def job(c: ClientDataset) -> np.ndarray:
            return local_train(start, c, self.cfg, self.client_rng(c.client_id, round))

        if self.cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.jobs) as pool:
                return list(pool.map(job, self.clients))
        return [job(c) for c in self.clients]

    def run_round(self, attackers: Sequence[Attacker] = (), defense: Defense | None = None,
                  eavesdrop: Callable[[int, int], int] | None = None) -> RoundLedger:
        """Train, attack, (optionally) filter, aggregate and broadcast one round.

        ``eavesdrop(attacker_index, n_benign)`` returns how many of the first
        benign uploads an attacker overhears; default is all of them.
        """
        t = self.global_model.round + 1
        prev = self.global_model
        benign = self._train_all(t)

        malicious, diags = [], []
        for j, att in enumerate(attackers):
            n_eav = len(benign) if eavesdrop is None else eavesdrop(j, len(benign))
            w, diag = att.craft(benign[:n_eav], self.sizes[:n_eav], prev, t)
            malicious.append(w)
            diags.append(diag)

        keep_b = np.ones(len(benign))
        keep_m = np.ones(len(malicious))
        report = None
        if defense is not None:
            keep_b, keep_m, report = defense.inspect(benign, malicious, prev, t)
            keep_b = np.asarray(keep_b, dtype=np.float64)
            keep_m = np.asarray(keep_m, dtype=np.float64)

        kept_mal = [w for w, k in zip(malicious, keep_m) if k]
        claimed = [self.claimed_size()] * len(kept_mal)
        new_global = aggregate(benign, self.sizes, kept_mal, claimed, keep_b, round=t)

        client_losses = [local_loss(w, c.train, self.cfg.reg_coeff) for w, c in zip(benign, self.clients)]
        total = float(sum(self.sizes))
        entry = RoundLedger(
            round=t,
            global_model=new_global.weights,
            benign_models=benign,
            malicious_models=malicious,
            selection=keep_b,
            malicious_kept=keep_m,
            distances=[euclidean_distance(w, prev.weights) for w in benign + malicious],
            global_distance=euclidean_distance(new_global.weights, prev.weights),
            global_accuracy=evaluate(new_global.weights, self.test),
            per_client_accuracy=[evaluate(w, self.test) for w in benign],
            malicious_accuracy=[evaluate(w, self.test) for w in malicious],
            client_losses=client_losses,
            global_loss=float(sum(
                s / total * local_loss(new_global.weights, c.train, self.cfg.reg_coeff)
                for s, c in zip(self.sizes, self.clients)
            )),
            attack_diagnostics=diags,
            defense_report=report,
        )
        self.global_model = new_global
        self.ledger.append(entry)
        return entry
