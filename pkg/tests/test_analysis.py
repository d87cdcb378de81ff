import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import two_state
from mfptopt.analysis import (
    ConnectivityWeights,
    analyze,
    connectivity_objective,
    deviation_matrix,
    effective_resistance,
    fast_objective,
    kemeny_constant,
    mfpt_matrix,
    stationary_distribution,
)
from mfptopt.errors import GraphError, ReducibleChainError
from mfptopt.graph import Graph, transition_matrix
from mfptopt.instances import complete_graph, cycle_graph, grid_graph
from mfptopt.oracles import mfpt_first_step, power_iteration_stationary, random_irreducible_chain

CYCLE3 = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=float)
K3 = (np.ones((3, 3)) - np.eye(3)) / 2


def test_stationary_doubly_stochastic(rng):
    # Birkhoff mixture of permutations
    n = 5
    P = sum(w * np.eye(n)[rng.permutation(n)] for w in rng.dirichlet(np.ones(4)))
    np.testing.assert_allclose(stationary_distribution(P), np.full(n, 0.2), atol=1e-14)


def test_stationary_two_state():
    P = two_state(0.3, 0.6)
    np.testing.assert_allclose(stationary_distribution(P), [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(power_iteration_stationary(P), [2 / 3, 1 / 3], atol=1e-12)


def test_stationary_cycle():
    np.testing.assert_allclose(stationary_distribution(CYCLE3), np.full(3, 1 / 3), atol=1e-15)


def test_reducible_rejected():
    P = np.array([[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(ReducibleChainError):
        analyze(P)
    with pytest.raises(ReducibleChainError):
        stationary_distribution(np.eye(3))


def test_deviation_uniform_two_state():
    np.testing.assert_allclose(deviation_matrix(np.full((2, 2), 0.5)), [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_deviation_rank_one_chain():
    pi = np.array([0.2, 0.3, 0.5])
    Pi = np.tile(pi, (3, 1))
    np.testing.assert_allclose(deviation_matrix(Pi), np.eye(3) - Pi, atol=1e-14)


def test_mfpt_cycle():
    np.testing.assert_allclose(mfpt_matrix(CYCLE3), [[3, 1, 2], [2, 3, 1], [1, 2, 3]], atol=1e-13)


def test_mfpt_complete_three():
    np.testing.assert_allclose(mfpt_matrix(K3), [[3, 2, 2], [2, 3, 2], [2, 2, 3]], atol=1e-13)
    np.testing.assert_allclose(mfpt_first_step(K3), mfpt_matrix(K3), atol=1e-13)


def test_mfpt_two_state():
    M = mfpt_matrix(two_state(0.3, 0.6))
    assert M[0, 1] == pytest.approx(10 / 3, abs=1e-13)
    assert M[1, 0] == pytest.approx(5 / 3, abs=1e-13)
    np.testing.assert_allclose(np.diag(M), [1.5, 3.0], atol=1e-13)


def test_objective_examples():
    assert connectivity_objective(CYCLE3) == pytest.approx(9, abs=1e-12)
    assert connectivity_objective(K3) == pytest.approx(12, abs=1e-12)
    assert connectivity_objective(np.full((2, 2), 0.5), "kemeny") == pytest.approx(2, abs=1e-14)


@pytest.mark.parametrize(
    "P, K",
    [(np.full((2, 2), 0.5), 2.0), (K3, 7 / 3), (CYCLE3, 2.0)],
)
def test_kemeny_examples(P, K):
    assert kemeny_constant(P) == pytest.approx(K, abs=1e-13)
    assert kemeny_constant(P) == pytest.approx(np.trace(deviation_matrix(P)) + 1, abs=1e-12)


def test_connectivity_weights_modes():
    pi = np.array([0.25, 0.75])
    np.testing.assert_array_equal(ConnectivityWeights.ones().resolve(2), [[0, 1], [1, 0]])
    np.testing.assert_allclose(ConnectivityWeights.kemeny().resolve(2, pi), np.outer(pi, pi))
    np.testing.assert_allclose(ConnectivityWeights.target(pi).resolve(2), np.outer(pi, pi))
    with pytest.raises(ValueError):
        ConnectivityWeights.matrix(-np.ones((2, 2)))
    with pytest.raises(ValueError):
        ConnectivityWeights.matrix(np.ones((3, 3))).resolve(2)


def test_target_weights_equal_kemeny_at_target():
    P = two_state(0.3, 0.6)
    pi = stationary_distribution(P)
    assert connectivity_objective(P, ConnectivityWeights.target(pi)) == pytest.approx(kemeny_constant(P), abs=1e-13)


@pytest.mark.parametrize("n", range(3, 7))
def test_resistance_complete(n):
    g = complete_graph(n)
    R, total = effective_resistance(g, np.ones(g.n_edges))
    assert total == pytest.approx(n - 1, abs=1e-10)
    np.testing.assert_array_equal(R, R.T)


@pytest.mark.parametrize("n", range(3, 9))
def test_resistance_cycle(n):
    g = cycle_graph(n, bidirectional=True)
    _, total = effective_resistance(g, np.ones(g.n_edges))
    assert total == pytest.approx((n**3 - n) / 12, abs=1e-9)


def test_resistance_rejects_asymmetric(three_cycle):
    g = cycle_graph(4, bidirectional=True)
    x = np.ones(g.n_edges)
    x[0] = 2.0
    with pytest.raises(GraphError):
        effective_resistance(g, x)
    with pytest.raises(GraphError):
        effective_resistance(three_cycle, np.ones(3))


@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(2, 4))
def test_objective_equals_n_times_resistance(seed, rows, cols):
    # symmetric weights with unit block sums: Sinkhorn on a grid with self-loops
    rng = np.random.default_rng(seed)
    g = grid_graph(rows, cols, self_loops=True)
    n = g.n_nodes
    W = np.zeros((n, n))
    W[g.tails, g.heads] = rng.random(g.n_edges) + 0.1
    W = 0.5 * (W + W.T)
    for _ in range(2000):
        d = np.sqrt(W.sum(axis=1))
        W = W / d[:, None] / d[None, :]
        W = 0.5 * (W + W.T)
    x = W[g.tails, g.heads]
    assert x.sum() == pytest.approx(n, abs=1e-9)
    _, total = effective_resistance(g, x)
    S = connectivity_objective(transition_matrix(g, x))
    assert S == pytest.approx(n * total, rel=1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_analytics_invariants(seed, n):
    P = random_irreducible_chain(n, np.random.default_rng(seed))
    an = analyze(P)
    np.testing.assert_allclose(an.pi @ P, an.pi, atol=1e-12)
    assert an.pi.sum() == pytest.approx(1, abs=1e-12)
    assert np.all(an.pi > 0)
    np.testing.assert_allclose(an.Pi, np.tile(an.pi, (n, 1)))
    np.testing.assert_allclose(an.D.sum(axis=1), 0, atol=1e-9)
    np.testing.assert_allclose(an.pi @ an.D, 0, atol=1e-9)
    np.testing.assert_allclose(np.diag(an.M) * an.pi, 1, atol=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_mfpt_agrees_with_first_step(seed, n):
    P = random_irreducible_chain(n, np.random.default_rng(seed))
    M = mfpt_matrix(P)
    ref = mfpt_first_step(P)
    assert np.max(np.abs(M - ref) / np.abs(ref)) < 1e-8


@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.sampled_from(["ones", "kemeny", "target"]))
def test_fast_objective_matches(seed, n, mode):
    rng = np.random.default_rng(seed)
    P = random_irreducible_chain(n, rng)
    C = ConnectivityWeights.target(rng.dirichlet(np.ones(n))) if mode == "target" else ConnectivityWeights(mode)
    assert fast_objective(P, C) == pytest.approx(connectivity_objective(P, C), rel=1e-9)
