"""Dense float64 kernels used across the lab.

Matrices are plain 2-D ``numpy.ndarray`` objects; every public function
returns fresh arrays and never mutates its inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

logger = logging.getLogger(__name__)


def as_mat(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def check_finite(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise ContractViolation(f"{what} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = as_mat(a), as_mat(b)
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def _vec(u) -> np.ndarray:
    return np.asarray(u, dtype=np.float64).ravel()


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v``, clamped to [-1, 1].

    A zero-norm argument yields 0.0 instead of NaN and is logged at debug
    level, so adjacency matrices built from it stay finite.
    """
    u, v = _vec(u), _vec(v)
    if u.shape != v.shape:
        raise ContractViolation(f"length mismatch: {u.size} vs {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        logger.debug("degenerate cosine similarity (zero-norm input)")
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_matrix(rows) -> tuple[np.ndarray, int]:
    """Pairwise cosine similarities between the rows of ``rows``.

    Returns the symmetric matrix and the number of zero-norm rows. A zero
    row is orthogonal to everything except itself (diagonal kept at 1).
    """
    x = as_mat(rows)
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    unit = x / safe[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, 1.0)
    n_zero = int(zero.sum())
    if n_zero:
        logger.debug("%d zero-norm rows in cosine matrix", n_zero)
    return sim, n_zero


def euclidean_distance(u, v) -> float:
    u, v = _vec(u), _vec(v)
    if u.shape != v.shape:
        raise ContractViolation(f"length mismatch: {u.size} vs {v.size}")
    return float(np.linalg.norm(u - v))


@dataclass(frozen=True)
class EigResult:
    values: np.ndarray  # sorted by |value|, descending
    vectors: np.ndarray  # column i pairs with values[i]


def sym_eig(m) -> EigResult:
    """Eigendecomposition of a symmetric matrix, ordered by magnitude.

    The input is symmetrised first. Each eigenvector is sign-normalised so
    that its largest-magnitude component is positive.
    """
    m = as_mat(m)
    if m.shape[0] != m.shape[1]:
        raise ContractViolation(f"sym_eig needs a square matrix, got {m.shape}")
    sym = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return EigResult(values=vals, vectors=vecs * signs)


def truncate_basis(e: EigResult, k: int) -> np.ndarray:
    n = e.values.size
    if not 1 <= k <= n:
        raise ContractViolation(f"truncation rank k={k} outside [1, {n}]")
    return e.vectors[:, :k].copy()


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, param, **hyper) -> "AdamState":
        p = np.asarray(param, dtype=np.float64)
        return cls(np.zeros_like(p), np.zeros_like(p), **hyper)


def adam_step(param, grad, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step; negate ``grad`` to ascend."""
    p = np.asarray(param, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if p.shape != g.shape or p.shape != state.first_moment.shape:
        raise ContractViolation(
            f"adam shape mismatch: param {p.shape}, grad {g.shape}, "
            f"state {state.first_moment.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_p = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        first_moment=m,
        second_moment=v,
        step_count=t,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_p, new_state
