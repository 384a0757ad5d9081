import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flpoisonlab.errors import ContractViolation
from flpoisonlab.linalg import (
    AdamState,
    adam_step,
    cosine_matrix,
    cosine_similarity,
    euclidean_distance,
    matmul,
    sym_eig,
    truncate_basis,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_matmul_matches_hand_product():
    a = [[1, 2], [3, 4]]
    b = [[5], [6]]
    assert matmul(a, b).tolist() == [[17.0], [39.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ContractViolation, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_cosine_known_angles():
    assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert cosine_similarity([1, 2, 3], [-1, -2, -3]) == pytest.approx(-1.0)
    assert cosine_similarity([1, 0], [0, 5]) == 0.0


def test_cosine_zero_norm_is_zero_not_nan():
    assert cosine_similarity([0, 0, 0], [1, 2, 3]) == 0.0


def test_cosine_length_mismatch():
    with pytest.raises(ContractViolation):
        cosine_similarity([1, 2], [1, 2, 3])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_cosine_bounded_and_symmetric(u, v):
    c = cosine_similarity(u, v)
    assert -1.0 <= c <= 1.0
    assert c == cosine_similarity(v, u)


def test_cosine_matrix_matches_pairwise(rng):
    x = rng.standard_normal((7, 4))
    x[3] = 0.0
    sim, n_zero = cosine_matrix(x)
    assert n_zero == 1
    for i in range(7):
        for j in range(7):
            expect = 1.0 if i == j else cosine_similarity(x[i], x[j])
            assert sim[i, j] == pytest.approx(expect, abs=1e-12)


def test_euclidean_distance_pythagoras():
    assert euclidean_distance([0, 0], [3, 4]) == 5.0


def test_sym_eig_reconstructs_and_orders(rng):
    b = rng.standard_normal((6, 6))
    a = b + b.T
    e = sym_eig(a)
    assert np.allclose(e.vectors @ np.diag(e.values) @ e.vectors.T, a, atol=1e-10)
    assert np.allclose(e.vectors.T @ e.vectors, np.eye(6), atol=1e-12)
    mags = np.abs(e.values)
    assert np.all(mags[:-1] >= mags[1:])


def test_sym_eig_sign_convention(rng):
    b = rng.standard_normal((5, 5))
    e = sym_eig(b @ b.T)
    for col in e.vectors.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_sym_eig_known_spectrum():
    # path graph on 2 nodes: eigenvalues +1 / -1 have equal magnitude,
    # the stable ordering keeps eigh's ascending order between them
    e = sym_eig([[0, 1], [1, 0]])
    assert sorted(e.values.tolist()) == [-1.0, 1.0]
    assert np.allclose(np.abs(e.vectors), 1 / math.sqrt(2))


def test_sym_eig_rejects_non_square():
    with pytest.raises(ContractViolation):
        sym_eig(np.ones((2, 3)))


def test_truncate_basis_bounds():
    e = sym_eig(np.eye(3))
    assert truncate_basis(e, 2).shape == (3, 2)
    for k in (0, 4):
        with pytest.raises(ContractViolation):
            truncate_basis(e, k)


def test_adam_first_step_moves_by_lr_times_sign():
    # with bias correction, step 1 is lr * g / (|g| + eps) per coordinate
    state = AdamState.zeros_like(np.zeros(3), learning_rate=0.1)
    p, s = adam_step(np.zeros(3), np.array([2.0, -0.5, 0.0]), state)
    assert p == pytest.approx([-0.1, 0.1, 0.0], abs=1e-7)
    assert s.step_count == 1


def test_adam_second_step_hand_computed():
    lr, b1, b2 = 0.01, 0.9, 0.999
    state = AdamState.zeros_like(np.zeros(1), learning_rate=lr)
    p, state = adam_step(np.zeros(1), np.array([1.0]), state)
    p, state = adam_step(p, np.array([3.0]), state)
    m = b1 * (1 - b1) * 1 + (1 - b1) * 3
    v = b2 * (1 - b2) * 1 + (1 - b2) * 9
    step2 = lr * (m / (1 - b1**2)) / (math.sqrt(v / (1 - b2**2)) + 1e-8)
    step1 = lr * 1.0 / (1.0 + 1e-8)
    assert p[0] == pytest.approx(-step1 - step2, rel=1e-12)


def test_adam_minimises_and_maximises_quadratic():
    target = np.array([1.5, -2.0])
    p, s = np.zeros(2), AdamState.zeros_like(np.zeros(2), learning_rate=0.05)
    for _ in range(2000):
        p, s = adam_step(p, 2 * (p - target), s)
    assert np.allclose(p, target, atol=1e-3)
    # ascent on -(p - target)^2 by negating its gradient
    q, s = np.zeros(2), AdamState.zeros_like(np.zeros(2), learning_rate=0.05)
    for _ in range(2000):
        q, s = adam_step(q, -(-2 * (q - target)), s)
    assert np.allclose(q, target, atol=1e-3)


def test_adam_does_not_mutate_inputs():
    p = np.ones(2)
    g = np.ones(2)
    state = AdamState.zeros_like(p)
    adam_step(p, g, state)
    assert p.tolist() == [1.0, 1.0] and state.step_count == 0
    assert state.first_moment.tolist() == [0.0, 0.0]


def test_adam_shape_mismatch():
    with pytest.raises(ContractViolation):
        adam_step(np.zeros(2), np.zeros(3), AdamState.zeros_like(np.zeros(2)))
