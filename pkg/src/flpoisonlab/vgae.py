"""Variational graph autoencoder over a parameter-correlation graph.

Two-layer GCN encoder with a shared first layer and separate mean /
log-sigma heads, inner-product decoder, and a hand-written backward pass.
Training runs Adam *ascent* on the reconstruction objective by default.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, NumericError
from .linalg import AdamState, adam_step

logger = logging.getLogger(__name__)

CLAMP = 1e-12


@dataclass(frozen=True)
class ParameterGraph:
    adjacency: np.ndarray  # (M, M) cosine similarities
    node_features: np.ndarray  # (M, I_eav)
    param_index: np.ndarray  # (M,) flat indices into the model vector
    zero_rows: int = 0

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]


@dataclass(frozen=True)
class VgaeParams:
    w0: np.ndarray  # (I_eav, h1)
    w_mu: np.ndarray  # (h1, h2)
    w_sigma: np.ndarray  # (h1, h2)
    opt: dict = field(default_factory=dict, compare=False)

    NAMES = ("w0", "w_mu", "w_sigma")

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.NAMES}


@dataclass(frozen=True)
class LatentSample:
    mu: np.ndarray
    log_sigma: np.ndarray
    z: np.ndarray
    noise: np.ndarray
    # cached forward quantities for the backward pass
    norm_adj: np.ndarray = field(repr=False, default=None)
    pre_relu: np.ndarray = field(repr=False, default=None)
    hidden: np.ndarray = field(repr=False, default=None)
    prop_hidden: np.ndarray = field(repr=False, default=None)
    prop_x: np.ndarray = field(repr=False, default=None)


def init_params(n_features: int, h1: int, h2: int, rng: np.random.Generator, lr: float = 0.01) -> VgaeParams:
    """Glorot-uniform weights with fresh Adam state per matrix."""

    def glorot(a, b):
        r = np.sqrt(6.0 / (a + b))
        return rng.uniform(-r, r, size=(a, b))

    w0, wm, ws = glorot(n_features, h1), glorot(h1, h2), glorot(h1, h2)
    opt = {n: AdamState.zeros_like(w, learning_rate=lr) for n, w in zip(VgaeParams.NAMES, (w0, wm, ws))}
    return VgaeParams(w0, wm, ws, opt)


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """Symmetric GCN propagation matrix ``D^-1/2 (A + I) D^-1/2``.

    Cosine edges can be negative, so degrees are taken over absolute edge
    weights; with non-negative edges this is the usual normalisation.
    """
    a_tilde = adj + np.eye(adj.shape[0])
    deg = np.abs(a_tilde).sum(axis=1)
    if np.any(deg <= 0):
        raise ContractViolation("GCN normalisation needs strictly positive degrees")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :]


def encode(g: ParameterGraph, p: VgaeParams, noise: np.ndarray) -> LatentSample:
    x = g.node_features
    if x.shape != (g.num_nodes, p.w0.shape[0]):
        raise ContractViolation(f"node features {x.shape} do not match W0 {p.w0.shape}")
    if noise.shape != (g.num_nodes, p.w_mu.shape[1]):
        raise ContractViolation(f"noise shape {noise.shape} != {(g.num_nodes, p.w_mu.shape[1])}")
    n = normalized_adjacency(g.adjacency)
    nx = n @ x
    pre = nx @ p.w0
    hidden = np.maximum(pre, 0.0)
    nh = n @ hidden
    mu = nh @ p.w_mu
    log_sigma = nh @ p.w_sigma
    z = mu + np.exp(log_sigma) * noise
    return LatentSample(mu, log_sigma, z, noise, n, pre, hidden, nh, nx)


def sigmoid(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def decode(z) -> np.ndarray:
    zz = z.z if isinstance(z, LatentSample) else np.asarray(z, dtype=np.float64)
    return sigmoid(zz @ zz.T)


def reconstruction_target(adj: np.ndarray) -> np.ndarray:
    """Map cosine similarities from [-1, 1] onto Bernoulli targets in [0, 1]."""
    return 0.5 * (adj + 1.0)


def kl_term(mu: np.ndarray, log_sigma: np.ndarray) -> float:
    m = mu.shape[0]
    return float(-0.5 / m * np.sum(1.0 + 2.0 * log_sigma - mu**2 - np.exp(2.0 * log_sigma)))


def bce_term(target: np.ndarray, a_hat: np.ndarray) -> float:
    p = np.clip(a_hat, CLAMP, 1.0 - CLAMP)
    m = target.shape[0]
    return float(-np.sum(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)) / (m * m))


def elbo_loss(g: ParameterGraph, z: LatentSample, a_hat: np.ndarray) -> float:
    """``eta = BCE - KL`` with BCE against the rescaled adjacency."""
    return bce_term(reconstruction_target(g.adjacency), a_hat) - kl_term(z.mu, z.log_sigma)


def loss_and_grads(g: ParameterGraph, p: VgaeParams, noise: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Forward pass plus exact gradients of ``eta`` w.r.t. the three weight matrices."""
    lat = encode(g, p, noise)
    a_hat = decode(lat)
    eta = elbo_loss(g, lat, a_hat)

    m = g.num_nodes
    target = reconstruction_target(g.adjacency)
    inside = (a_hat > CLAMP) & (a_hat < 1.0 - CLAMP)
    g_s = np.where(inside, a_hat - target, 0.0) / (m * m)
    g_z = (g_s + g_s.T) @ lat.z

    sigma = np.exp(lat.log_sigma)
    g_mu = g_z - lat.mu / m
    g_ls = g_z * sigma * noise - (sigma**2 - 1.0) / m

    d_wm = lat.prop_hidden.T @ g_mu
    d_ws = lat.prop_hidden.T @ g_ls
    g_nh = g_mu @ p.w_mu.T + g_ls @ p.w_sigma.T
    g_hidden = lat.norm_adj.T @ g_nh
    g_pre = g_hidden * (lat.pre_relu > 0)
    d_w0 = lat.prop_x.T @ g_pre
    return eta, {"w0": d_w0, "w_mu": d_wm, "w_sigma": d_ws}


@dataclass
class TrainResult:
    params: VgaeParams
    a_hat: np.ndarray
    eta_trace: list[float]


def train_vgae(g: ParameterGraph, p: VgaeParams, epochs: int, rng: np.random.Generator,
               minimize: bool = False, context: str = "") -> TrainResult:
    """Adam ascent (or descent with ``minimize``) on ``eta`` for ``epochs`` steps.

    Noise is resampled every step; the returned reconstruction is decoded
    from the posterior mean. ``eta_trace`` holds the objective before each
    step followed by its value at the final parameters (noise-free).
    """
    if epochs < 1:
        raise ContractViolation("train_vgae needs at least one epoch")
    h2 = p.w_mu.shape[1]
    sign = 1.0 if minimize else -1.0
    trace = []
    for epoch in range(epochs):
        noise = rng.standard_normal((g.num_nodes, h2))
        eta, grads = loss_and_grads(g, p, noise)
        if not np.isfinite(eta) or not all(np.all(np.isfinite(v)) for v in grads.values()):
            norms = {k: float(np.linalg.norm(v)) for k, v in p.as_dict().items()}
            raise NumericError(f"non-finite VGAE objective {context} epoch={epoch} weight_norms={norms}")
        trace.append(eta)
        new, opt = {}, dict(p.opt)
        for name, value in p.as_dict().items():
            new[name], opt[name] = adam_step(value, sign * grads[name], opt[name])
        p = replace(p, **new, opt=opt)
    mean = encode(g, p, np.zeros((g.num_nodes, h2)))
    a_hat = decode(mean)
    trace.append(elbo_loss(g, mean, a_hat))
    return TrainResult(p, a_hat, trace)
