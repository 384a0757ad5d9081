"""Data-free model poisoning through an adversarial graph autoencoder.

Per round the attacker:

1. picks benign uploads with a 0/1 knapsack over their distance to the
   size-weighted benign mean,
2. builds a cosine-similarity graph over the M most variable parameters,
3. trains the VGAE to *maximise* its reconstruction objective,
4. re-synthesises the parameters in the spectral basis of the regenerated
   graph and writes them into a copy of the global model,
5. takes a projected subgradient step on its two dual variables.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation
from .fl import GlobalModel
from .linalg import cosine_matrix, euclidean_distance, sym_eig, truncate_basis
from .vgae import ParameterGraph, init_params, train_vgae

logger = logging.getLogger(__name__)


def select_parameters(models: Sequence[np.ndarray], m: int) -> np.ndarray:
    """Indices of the ``m`` coordinates with the largest spread across models.

    Ties go to the lower index; the result is returned in ascending order.
    """
    if not models:
        raise ContractViolation("select_parameters needs at least one model")
    stack = np.vstack([np.asarray(w, dtype=np.float64) for w in models])
    p = stack.shape[1]
    if not 1 <= m <= p:
        raise ConfigError(f"M={m} must lie in [1, {p}] (model size)")
    var = stack.var(axis=0)
    var[np.ptp(stack, axis=0) == 0] = 0.0
    top = np.argsort(-var, kind="stable")[:m]
    return np.sort(top)


def build_graph(models: Sequence[np.ndarray], idx: np.ndarray) -> ParameterGraph:
    if not models:
        raise ContractViolation("build_graph needs at least one model")
    idx = np.asarray(idx, dtype=np.int64)
    x = np.vstack([np.asarray(w, dtype=np.float64)[idx] for w in models]).T
    adj, zero_rows = cosine_matrix(x)
    return ParameterGraph(adj, x, idx, zero_rows)


def laplacian(adj: np.ndarray) -> np.ndarray:
    """Combinatorial Laplacian ``diag(row sums) - adj``."""
    return np.diag(adj.sum(axis=1)) - adj


def spectral_transplant(g: ParameterGraph, a_hat: np.ndarray, k: int) -> np.ndarray:
    """Move node features into the benign graph's spectrum and back out through the regenerated one.

    Returns the (I_eav, M) matrix whose rows are candidate parameter vectors.
    """
    m = g.num_nodes
    if not 1 <= k <= m:
        raise ConfigError(f"truncation rank k={k} must lie in [1, M={m}]")
    if a_hat.shape != (m, m):
        raise ContractViolation(f"regenerated adjacency {a_hat.shape} does not match M={m}")
    basis = truncate_basis(sym_eig(laplacian(g.adjacency)), k)
    spectrum = basis.T @ g.node_features
    basis_hat = truncate_basis(sym_eig(laplacian(a_hat)), k)
    x_hat = basis_hat @ spectrum
    if not np.all(np.isfinite(x_hat)):
        raise ContractViolation("spectral transplant produced non-finite features")
    return x_hat.T


def assemble_malicious(f_hat: np.ndarray, row: int, base: GlobalModel, idx: np.ndarray) -> np.ndarray:
    if not 0 <= row < f_hat.shape[0]:
        raise ContractViolation(f"row {row} out of range for {f_hat.shape[0]} candidate models")
    w = np.array(base.weights, dtype=np.float64)
    w[np.asarray(idx, dtype=np.int64)] = f_hat[row]
    return w


# ------------------------------------------------------------------ knapsack


def _fits(total: float, budget: float) -> bool:
    return total <= budget + 1e-12 * max(1.0, abs(budget))


def _cheaper(a: tuple[float, tuple[int, ...]], b: tuple[float, tuple[int, ...]]) -> bool:
    """Lower total wins; totals equal up to rounding fall back to index order."""
    if abs(a[0] - b[0]) > 1e-12 * max(1.0, abs(a[0]), abs(b[0])):
        return a[0] < b[0]
    return a[1] < b[1]


def select_benign_knapsack(distances: Sequence[float], budget: float) -> np.ndarray:
    """Pick as many models as fit under ``budget``; break ties by total, then index.

    Unit-value 0/1 knapsack solved exactly by dynamic programming over the
    number of chosen items: ``best[c]`` is the cheapest feasible set of size
    ``c`` among the items seen so far.
    """
    d = np.asarray(distances, dtype=np.float64)
    if np.any(d < 0):
        raise ContractViolation("knapsack distances must be non-negative")
    n = d.size
    if budget < 0:
        logger.warning("negative knapsack budget %.3g: no benign model selected", budget)
        return np.zeros(n, dtype=np.int64)
    # best[c] = (total, chosen indices in ascending order)
    best: list[tuple[float, tuple[int, ...]] | None] = [(0.0, ())] + [None] * n
    for i in range(n):
        for c in range(i + 1, 0, -1):
            prev = best[c - 1]
            if prev is None:
                continue
            cand = (prev[0] + d[i], prev[1] + (i,))
            if not _fits(cand[0], budget):
                continue
            cur = best[c]
            if cur is None or _cheaper(cand, cur):
                best[c] = cand
    chosen = next(b for b in reversed(best) if b is not None)[1]
    beta = np.zeros(n, dtype=np.int64)
    beta[list(chosen)] = 1
    return beta


# --------------------------------------------------------------------- duals


@dataclass(frozen=True)
class DualState:
    lam: float = 0.1
    rho: float = 0.1
    step: float = 0.01
    d_t: float = 1.0
    upsilon: float = 1.0

    def __post_init__(self):
        if self.lam < 0 or self.rho < 0:
            raise ContractViolation("dual variables must be non-negative")


def update_duals(d_mal: float, selected_dist_sum: float, s: DualState) -> DualState:
    """Projected subgradient step, keeping the published sign convention."""
    lam = max(0.0, s.lam - s.step * (d_mal - s.d_t))
    rho = max(0.0, s.rho - s.step * (selected_dist_sum - s.upsilon))
    return replace(s, lam=lam, rho=rho)


# ------------------------------------------------------------------ attacker


@dataclass
class VgaeSettings:
    m: int = 100
    h1: int = 32
    h2: int = 16
    lr: float = 0.01
    epochs: int = 50
    k: int | None = None  # None: min(M, 64)
    minimize: bool = False


@dataclass
class DualSettings:
    d_t_mode: str = "median"  # or a fixed float
    upsilon_mode: str = "sum"  # or a fixed float
    step: float = 0.01
    lam0: float = 0.1
    rho0: float = 0.1


def weighted_mean(models: Sequence[np.ndarray], sizes: Sequence[float]) -> np.ndarray:
    w = np.asarray(sizes, dtype=np.float64)
    return np.tensordot(w / w.sum(), np.vstack(models), axes=1)


def _resolve(mode, default: float) -> float:
    return default if isinstance(mode, str) else float(mode)


@dataclass
class VgaeMpAttacker:
    index: int
    seed: int = 0
    vgae: VgaeSettings = field(default_factory=VgaeSettings)
    duals: DualSettings = field(default_factory=DualSettings)
    name: str = "vgae_mp"
    state: DualState | None = None

    def rng(self, round: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, 23, self.index, round])

    def craft(self, eavesdropped, sizes, global_model: GlobalModel, round: int):
        if not eavesdropped:
            raise ContractViolation("the attacker overheard no benign model")
        rng = self.rng(round)
        models = [np.asarray(w, dtype=np.float64) for w in eavesdropped]
        g_prev = global_model.weights

        mean = weighted_mean(models, sizes)
        spread = np.array([euclidean_distance(w, mean) for w in models])
        to_global = np.array([euclidean_distance(w, g_prev) for w in models])
        upsilon = _resolve(self.duals.upsilon_mode, float(spread.sum()))
        d_t = _resolve(self.duals.d_t_mode, float(np.median(to_global)))
        if self.state is None:
            self.state = DualState(self.duals.lam0, self.duals.rho0, self.duals.step, d_t, upsilon)
        else:
            self.state = replace(self.state, d_t=d_t, upsilon=upsilon)

        beta = select_benign_knapsack(spread, upsilon)
        if not beta.any():
            logger.warning("round %d attacker %d: knapsack selected nothing, using all models", round, self.index)
            beta = np.ones_like(beta)
        chosen = [w for w, b in zip(models, beta) if b]

        idx = select_parameters(chosen, self.vgae.m)
        graph = build_graph(chosen, idx)
        params = init_params(len(chosen), self.vgae.h1, self.vgae.h2, rng, self.vgae.lr)
        result = train_vgae(graph, params, self.vgae.epochs, rng, self.vgae.minimize,
                            context=f"round={round} attacker={self.index}")
        k = min(self.vgae.k or 64, graph.num_nodes)
        f_hat = spectral_transplant(graph, result.a_hat, k)
        w_mal = assemble_malicious(f_hat, self.index % f_hat.shape[0], global_model, idx)

        d_mal = euclidean_distance(w_mal, g_prev)
        selected_sum = float(np.sum(spread * beta))
        self.state = update_duals(d_mal, selected_sum, self.state)
        diag = {
            "kind": self.name,
            "eta_loss": result.eta_trace,
            "d_mal": d_mal,
            "d_t": d_t,
            "upsilon": upsilon,
            "selected_dist_sum": selected_sum,
            "lambda": self.state.lam,
            "rho": self.state.rho,
            "beta": beta.tolist(),
            "n_eavesdropped": len(models),
            "zero_norm_params": graph.zero_rows,
        }
        return w_mal, diag
