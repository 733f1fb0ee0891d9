import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import jordan_block, random_structured_matrix, rotation_block
from rnn2prog.jordan import (JnfError, eps_kernel, group_eigenvalues, jordan_normal_form,
                             jordan_structure)


def reconstruction_error(W, T, J):
    return np.abs(T @ J @ np.linalg.inv(T) - W).max()


def test_shift_matrix_is_its_own_form():
    W = np.array([[0.0, 1.0], [0.0, 0.0]])
    T, J = jordan_normal_form(W)
    assert np.allclose(T, np.eye(2)) and np.array_equal(J, W)


def test_diagonal_matrix_gives_permutation():
    T, J = jordan_normal_form(np.diag([2.0, 3.0]))
    assert sorted(np.diag(J)) == [2.0, 3.0] and J[0, 1] == J[1, 0] == 0
    assert np.allclose(np.abs(T), np.round(np.abs(T)))
    assert np.allclose(np.abs(T).sum(axis=0), 1) and np.allclose(np.abs(T).sum(axis=1), 1)


@pytest.mark.parametrize("d", [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, -0.01, -0.1, -0.5])
def test_near_nilpotent_pair_takes_the_shift_branch(d):
    T, J = jordan_normal_form(np.array([[0.0, 1.0], [d, 0.0]]), eps=0.7)
    assert np.array_equal(J, np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_small_eps_diagonalizes_the_same_pair():
    W = np.array([[0.0, 1.0], [0.1, 0.0]])
    T, J = jordan_normal_form(W, eps=1e-6)
    assert np.allclose(sorted(np.diag(J)), [-np.sqrt(0.1), np.sqrt(0.1)])
    assert reconstruction_error(W, T, J) < 1e-9


def test_rotation_becomes_real_block():
    th = 0.4
    W = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]) * 0.9
    T, J = jordan_normal_form(W, eps=1e-8)
    assert abs(J[0, 0] - J[1, 1]) < 1e-12 and abs(J[0, 1] + J[1, 0]) < 1e-12
    assert abs(abs(J[1, 0]) - 0.9 * np.sin(th)) < 1e-9
    assert jordan_structure(J) == [(0, 2, True)]


def test_defective_rotation_pair():
    W0 = rotation_block(0.3, 0.8, size=2)
    P = np.random.default_rng(5).normal(size=(4, 4))
    W = P @ W0 @ np.linalg.inv(P)
    T, J = jordan_normal_form(W, eps=1e-8)
    assert jordan_structure(J) == [(0, 4, True)]
    assert np.allclose(J[0:2, 2:4], np.eye(2))
    assert reconstruction_error(W, T, J) < 1e-6


def test_blocks_sorted_largest_first():
    W = np.zeros((4, 4))
    W[:3, :3] = jordan_block(1.0, 3)
    W[3, 3] = 5.0
    T, J = jordan_normal_form(W, eps=1e-8)
    assert jordan_structure(J) == [(0, 3, False), (3, 4, False)]
    assert J[3, 3] == pytest.approx(5.0)


def test_eps_kernel_thresholds_singular_values():
    X = np.diag([3.0, 0.5, 1e-3])
    K = eps_kernel(X, 0.1)
    assert K.shape == (3, 1) and abs(abs(K[2, 0]) - 1) < 1e-12
    assert eps_kernel(X, 1.0).shape == (3, 2)


def test_non_transitive_grouping_raises():
    with pytest.raises(JnfError):
        group_eigenvalues(np.array([0.0, 0.6, 1.2]), 0.7)
    assert group_eigenvalues(np.array([0.0, 0.3, 5.0]), 0.7) == [[0, 1], [2]]


def test_non_square_rejected():
    with pytest.raises(ValueError):
        jordan_normal_form(np.zeros((2, 3)))


def test_empty_matrix():
    T, J = jordan_normal_form(np.zeros((0, 0)))
    assert T.shape == J.shape == (0, 0)


@given(st.integers(0, 10 ** 6), st.integers(1, 8))
def test_reconstruction_property(seed, n):
    W = random_structured_matrix(np.random.default_rng(seed), n)
    T, J = jordan_normal_form(W, eps=1e-8)
    assert reconstruction_error(W, T, J) <= 1e-3 * (1 + np.abs(W).max())
    # off-pattern entries of J are exactly zero
    mask = np.zeros_like(J, dtype=bool)
    for start, stop, cplx in jordan_structure(J):
        mask[start:stop, start:stop] = True
    assert np.all(J[~mask] == 0)
