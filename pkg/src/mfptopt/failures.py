"""Random edge failures: redistribution, exact expectation by enumeration,
independent/coupled/correlated sampling and sample-average objectives.

A realization is a boolean vector over the graph's risky edges
(``True`` = accessible), in the order of ``Graph.risky_edges``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .analysis import analyze, objective_from_analytics
from .errors import GraphError, ReducibleChainError
from .graph import Graph, transition_matrix

ENUMERATION_CAP = 20


@dataclass(frozen=True)
class FailureModel:
    """Which edges can fail and how.

    ``groups`` partitions the risky edges into units that fail together
    (singletons unless reciprocal coupling is on); each unit has one
    marginal failure probability.
    """

    edges: tuple[tuple[int, int], ...]
    q: np.ndarray
    mode: str = "independent"
    rho: float = 0.0
    groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise GraphError("failure probabilities must lie in [0, 1]")
        if self.mode not in ("independent", "reciprocal", "correlated"):
            raise GraphError(f"unknown failure mode {self.mode!r}")
        if not 0.0 <= self.rho < 1.0:
            raise GraphError("rho must lie in [0, 1)")
        object.__setattr__(self, "q", q)
        if not self.groups:
            object.__setattr__(self, "groups", tuple((k,) for k in range(len(self.edges))))
        for grp in self.groups:
            if np.ptp(q[list(grp)]) > 0:
                raise GraphError(f"coupled edges {[self.edges[k] for k in grp]} need equal failure probabilities")

    @classmethod
    def from_graph(cls, g: Graph, mode: str | None = None, rho: float | None = None, reciprocal: bool | None = None):
        mode = mode or g.correlation.mode
        rho = g.correlation.rho if rho is None else rho
        edges = tuple(g.risky_edges)
        q = g.failure_probabilities
        coupled = (mode == "reciprocal") if reciprocal is None else reciprocal
        groups = None
        if coupled:
            pos = {e: k for k, e in enumerate(edges)}
            seen, groups = set(), []
            for k, (i, j) in enumerate(edges):
                if k in seen:
                    continue
                grp = [k]
                r = pos.get((j, i))
                if r is not None and r != k:
                    grp.append(r)
                seen.update(grp)
                groups.append(tuple(sorted(grp)))
            groups = tuple(groups)
        return cls(edges=edges, q=q, mode=mode, rho=rho, groups=groups or ())

    @property
    def n_units(self) -> int:
        return len(self.groups)

    @property
    def unit_q(self) -> np.ndarray:
        return np.array([self.q[g[0]] for g in self.groups])

    def expand(self, unit_alive: np.ndarray) -> np.ndarray:
        """Per-unit survival flags to per-edge flags (works on batches)."""
        unit_alive = np.asarray(unit_alive, dtype=bool)
        out = np.empty(unit_alive.shape[:-1] + (len(self.edges),), dtype=bool)
        for u, grp in enumerate(self.groups):
            out[..., list(grp)] = unit_alive[..., u : u + 1]
        return out


def failed_mask(g: Graph, model: FailureModel, alive) -> np.ndarray:
    """N x N boolean matrix marking failed entries."""
    mask = np.zeros((g.n_nodes, g.n_nodes), dtype=bool)
    alive = np.asarray(alive, dtype=bool)
    for (i, j), ok in zip(model.edges, alive):
        if not ok:
            mask[i, j] = True
    return mask


def redistribute(P, failed) -> np.ndarray:
    """Drop failed transitions and rescale each row's surviving mass to 1.

    ``failed`` is an N x N boolean mask or an iterable of ``(i, j)`` pairs.
    """
    P = np.asarray(P, dtype=float)
    if not (isinstance(failed, np.ndarray) and failed.shape == P.shape):
        mask = np.zeros(P.shape, dtype=bool)
        for i, j in failed:
            mask[i, j] = True
        failed = mask
    if not failed.any():
        return P.copy()
    Q = np.where(failed, 0.0, P)
    kept = Q.sum(axis=1)
    if np.any(kept <= 0):
        rows = np.flatnonzero(kept <= 0).tolist()
        raise ReducibleChainError(f"rows {rows} lose all their probability mass")
    return Q / kept[:, None]


def realization_probability(model: FailureModel, alive) -> float:
    """Product of ``q`` over failed units and ``1 - q`` over surviving ones."""
    if model.mode == "correlated":
        raise ValueError("correlated failures have no closed-form realization probability; sample instead")
    alive = np.asarray(alive, dtype=bool)
    unit_alive = np.array([alive[g[0]] for g in model.groups], dtype=bool)
    for u, grp in enumerate(model.groups):
        if np.any(alive[list(grp)] != unit_alive[u]):
            return 0.0
    q = model.unit_q
    return float(np.prod(np.where(unit_alive, 1.0 - q, q)))


def enumerate_realizations(model: FailureModel, cap: int = ENUMERATION_CAP):
    """Yield ``(alive, probability)`` over all unit failure patterns."""
    if model.mode == "correlated":
        raise ValueError("cannot enumerate correlated failures; sample instead")
    if model.n_units > cap:
        raise ValueError(f"{model.n_units} risky units exceeds the enumeration cap of {cap}")
    for bits in itertools.product((True, False), repeat=model.n_units):
        alive = model.expand(np.array(bits, dtype=bool))
        yield alive, realization_probability(model, alive)


def realized_objective(g: Graph, P, C, model: FailureModel, alive) -> float:
    Q = redistribute(P, failed_mask(g, model, alive))
    return objective_from_analytics(analyze(Q, check=False), C)


def expected_objective_enumerate(g: Graph, x, C, model: FailureModel, cap: int = ENUMERATION_CAP) -> float:
    """Exact expectation of ``S(Q(P(x), E), C)`` over every realization."""
    P = transition_matrix(g, x)
    total = 0.0
    for alive, prob in enumerate_realizations(model, cap):
        if prob > 0:
            total += prob * realized_objective(g, P, C, model, alive)
    return total


def sample_edge_sets(model: FailureModel, L: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``L`` realizations as an ``(L, n_risky)`` boolean array.

    Correlated mode thresholds an exchangeable latent normal vector
    ``sqrt(rho) W + sqrt(1 - rho) e_u``: a unit fails when its coordinate
    falls below ``Phi^{-1}(q_u)``, so marginals are exact.
    """
    q = model.unit_q
    if model.mode == "correlated":
        common = rng.standard_normal((L, 1))
        own = rng.standard_normal((L, model.n_units))
        z = np.sqrt(model.rho) * common + np.sqrt(1.0 - model.rho) * own
        unit_alive = z >= ndtri(q)[None, :]
    else:
        unit_alive = rng.random((L, model.n_units)) >= q[None, :]
    return model.expand(unit_alive)


def sample_average_objective(g: Graph, x, C, model: FailureModel, realizations) -> float:
    """Mean of ``S(Q(P(x), E_l), C)`` over the given realizations."""
    P = transition_matrix(g, x)
    realizations = np.atleast_2d(np.asarray(realizations, dtype=bool))
    return float(np.mean([realized_objective(g, P, C, model, r) for r in realizations]))


def spsa_direction_random(g: Graph, x, C, model: FailureModel, B, delta, eta: float, realizations) -> np.ndarray:
    """Two-point null-space estimate with the same realizations at both points."""
    x = np.asarray(x, dtype=float)
    step = np.asarray(B) @ np.asarray(delta, dtype=float)
    lo = sample_average_objective(g, x - eta * step, C, model, realizations)
    hi = sample_average_objective(g, x + eta * step, C, model, realizations)
    return (lo - hi) / (2 * eta) * step


def expected_stationary(g: Graph, x, model: FailureModel, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Exact ``E[pi(Q(P(x), E))]`` by enumeration."""
    P = transition_matrix(g, x)
    out = np.zeros(g.n_nodes)
    for alive, prob in enumerate_realizations(model, cap):
        if prob > 0:
            out += prob * analyze(redistribute(P, failed_mask(g, model, alive)), check=False).pi
    return out
