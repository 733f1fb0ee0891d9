import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rnn2prog.bits import (BitCodebook, Clusters, ContinuousRepresentation, bit_tuple,
                           boolean_assign, cluster_states)


@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 10 ** 6))
def test_separated_clusters_are_found(K, n, seed):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-5, 5, size=(K, n))
    while K > 1 and min(np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2)) < 1:
        centers = rng.uniform(-5, 5, size=(K, n))
    X = np.repeat(centers, 50, axis=0) + rng.normal(0, 1e-3, size=(50 * K, n))
    cl = cluster_states(X)
    assert cl.count == K
    truth = np.repeat(np.arange(K), 50)
    labels = cl.assign(X)
    # the clustering is the true partition up to relabelling
    assert len(set(zip(truth.tolist(), labels.tolist()))) == K
    assert cl.radius(X) < 0.01


def test_clustering_ignores_input_order(rng):
    X = np.repeat([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]], 40, axis=0) + rng.normal(0, 1e-3, (120, 2))
    a = cluster_states(X).centers
    b = cluster_states(X[rng.permutation(len(X))]).centers
    assert np.array_equal(a, b)


def test_exact_two_point_cloud_is_two_clusters():
    cl = cluster_states(np.array([[0.0], [1.0], [0.0], [1.0]]))
    assert cl.count == 2
    assert cl.centers.ravel().tolist() == [0.0, 1.0]


def test_single_cluster_and_tight_cloud():
    assert cluster_states(np.ones((10, 3))).count == 1
    X = np.random.default_rng(0).normal(0, 1e-3, size=(100, 2))
    assert cluster_states(X).count == 1


def test_continuous_cloud_is_rejected():
    X = np.random.default_rng(0).uniform(-1, 1, size=(500, 2))
    with pytest.raises(ContinuousRepresentation):
        cluster_states(X)


def test_bit_tuple_is_msb_first():
    assert bit_tuple(6, 3) == (1, 1, 0)
    assert [bit_tuple(v, 2) for v in range(4)] == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_boolean_assign_picks_the_cheapest_bijection():
    cl = Clusters(np.array([[0.0], [1.0], [2.0], [3.0]]), 10.0)
    target = [(1, 1), (0, 0), (1, 0), (0, 1)]

    def scorer(book):
        return sum(a != b for a, b in zip(book.codes, target))

    book, score = boolean_assign(cl, scorer)
    assert score == 0 and book.codes == target


def test_boolean_assign_breaks_ties_by_first_permutation():
    cl = Clusters(np.array([[0.0], [1.0]]), 10.0)
    book, _ = boolean_assign(cl, lambda b: 1.0)
    assert book.codes == [(0,), (1,)]


def test_boolean_assign_limits():
    with pytest.raises(ValueError):
        boolean_assign(Clusters(np.zeros((3, 1)), 1.0), lambda b: 0.0)
    with pytest.raises(ValueError):
        boolean_assign(Clusters(np.arange(2.0)[:, None], 1.0), lambda b: None)


def test_codebook_round_trip(tmp_path):
    book = BitCodebook(np.array([[0.0, 0.0], [1.3, -0.5], [0.4, 0.9], [1.7, 0.4]]),
                       [(0, 0), (1, 0), (0, 1), (1, 1)])
    book.save(tmp_path / "c.json")
    b2 = BitCodebook.load(tmp_path / "c.json")
    assert b2.codes == book.codes and np.array_equal(b2.centers, book.centers)
    bits = np.array([[1, 0], [1, 1], [0, 0]])
    assert np.array_equal(book.encode(book.decode(bits)), bits)
    with pytest.raises(ValueError):
        BitCodebook(np.zeros((2, 1)), [(0,), (0,)])


def test_greedy_swaps_beyond_b_max():
    cl = Clusters(np.arange(16.0)[:, None], 10.0)
    target = [bit_tuple(v, 4) for v in (3, 1, 2, 0, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15)]

    def scorer(book):
        return sum(a != b for a, b in zip(book.codes, target))

    book, score = boolean_assign(cl, scorer, b_max=3)
    assert score == 0 and book.codes == target
