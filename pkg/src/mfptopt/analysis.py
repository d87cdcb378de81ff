"""Stationary distribution, deviation matrix, mean first passage times and
the weighted-MFPT connectivity objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import GraphError, ReducibleChainError
from .graph import Graph, is_symmetric_weights, support_is_irreducible, transition_matrix


@dataclass(frozen=True)
class ChainAnalytics:
    pi: np.ndarray
    Pi: np.ndarray
    D: np.ndarray
    M: np.ndarray


def _require_irreducible(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {P.shape}")
    if not support_is_irreducible(P):
        raise ReducibleChainError("transition matrix is reducible")
    return P


def stationary_distribution(P, check: bool = True) -> np.ndarray:
    """Solve ``pi (I - P) = 0`` with the last equation replaced by ``sum(pi) = 1``."""
    P = _require_irreducible(P) if check else np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.eye(n) - P.T
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = sla.solve(A, rhs, check_finite=False)
    except sla.LinAlgError as exc:
        raise ReducibleChainError(f"singular stationary system: {exc}") from exc
    return pi


def _fundamental(P, pi):
    n = P.shape[0]
    Pi = np.tile(pi, (n, 1))
    try:
        Z = sla.inv(np.eye(n) - P + Pi, check_finite=False)
    except sla.LinAlgError as exc:
        raise ReducibleChainError(f"singular fundamental matrix: {exc}") from exc
    return Pi, Z - Pi


def deviation_matrix(P, check: bool = True) -> np.ndarray:
    """``D = (I - P + Pi)^{-1} - Pi``."""
    P = _require_irreducible(P) if check else np.asarray(P, dtype=float)
    return _fundamental(P, stationary_distribution(P, check=False))[1]


def _mfpt_from(pi, D):
    n = len(pi)
    return (np.eye(n) - D + np.outer(np.ones(n), np.diag(D))) / pi[None, :]


def analyze(P, check: bool = True) -> ChainAnalytics:
    """All chain analytics from a single LU solve and one inverse."""
    P = _require_irreducible(P) if check else np.asarray(P, dtype=float)
    pi = stationary_distribution(P, check=False)
    Pi, D = _fundamental(P, pi)
    return ChainAnalytics(pi=pi, Pi=Pi, D=D, M=_mfpt_from(pi, D))


def mfpt_matrix(P, check: bool = True) -> np.ndarray:
    """Mean first passage times; ``M[i, i]`` is the mean return time ``1/pi_i``."""
    return analyze(P, check=check).M


@dataclass(frozen=True)
class ConnectivityWeights:
    """Pairwise MFPT weights ``C``.

    mode ``"ones"``: ``C = 11^T - I``; ``"matrix"``: the given ``values``;
    ``"kemeny"``: ``C_ij = pi_i pi_j`` recomputed from the chain being
    scored; ``"target"``: ``C_ij = pihat_i pihat_j`` for a fixed ``pihat``.
    """

    mode: str = "ones"
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("ones", "matrix", "kemeny", "target"):
            raise ValueError(f"unknown weight mode {self.mode!r}")
        if self.mode in ("matrix", "target"):
            if self.values is None:
                raise ValueError(f"mode {self.mode!r} needs values")
            v = np.asarray(self.values, dtype=float)
            if np.any(v < 0):
                raise ValueError("connectivity weights must be non-negative")
            object.__setattr__(self, "values", v)

    @classmethod
    def ones(cls):
        return cls("ones")

    @classmethod
    def kemeny(cls):
        return cls("kemeny")

    @classmethod
    def target(cls, pihat):
        pihat = np.asarray(pihat, dtype=float)
        return cls("target", pihat)

    @classmethod
    def matrix(cls, C):
        return cls("matrix", np.asarray(C, dtype=float))

    @property
    def depends_on_chain(self) -> bool:
        return self.mode == "kemeny"

    def resolve(self, n: int, pi: np.ndarray | None = None) -> np.ndarray:
        if self.mode == "ones":
            return np.ones((n, n)) - np.eye(n)
        if self.mode == "kemeny":
            return np.outer(pi, pi)
        if self.mode == "target":
            return np.outer(self.values, self.values)
        if self.values.shape != (n, n):
            raise ValueError(f"C has shape {self.values.shape}, chain has {n} states")
        return self.values

    def describe(self) -> str:
        return self.mode


def _as_weights(C) -> ConnectivityWeights:
    if C is None:
        return ConnectivityWeights.ones()
    if isinstance(C, ConnectivityWeights):
        return C
    if isinstance(C, str):
        return ConnectivityWeights(C)
    return ConnectivityWeights.matrix(C)


def objective_from_analytics(an: ChainAnalytics, C) -> float:
    C = _as_weights(C)
    return float(np.sum(C.resolve(len(an.pi), an.pi) * an.M))


def connectivity_objective(P, C=None, check: bool = True) -> float:
    """``S(P, C) = sum_ij C_ij M_ij``."""
    return objective_from_analytics(analyze(P, check=check), C)


def fast_objective(P, C: ConnectivityWeights) -> float:
    """``S(P, C)`` from one inverse, for inner loops.

    Uses ``Z = (I - P + 11^T/N)^{-1}``: then ``pi = 1^T Z / N`` and
    ``M_ij = (Z_jj - Z_ij) / pi_j`` off the diagonal. No irreducibility check.
    """
    n = P.shape[0]
    Z = np.linalg.inv(np.eye(n) - P + 1.0 / n)
    pi = Z.mean(axis=0)
    zd = np.diagonal(Z)
    if C.mode == "ones":
        # sum over i != j of (Z_jj - Z_ij) / pi_j
        return float(np.sum((n * zd - Z.sum(axis=0)) / pi))
    W = C.resolve(n, pi)
    M = (zd[None, :] - Z) / pi[None, :]
    M[np.diag_indices(n)] = 1.0 / pi
    return float(np.sum(W * M))


def kemeny_constant(P, check: bool = True) -> float:
    """``sum_ij pi_i pi_j M_ij`` (diagonal included, equals ``trace(D) + 1``)."""
    return connectivity_objective(P, ConnectivityWeights.kemeny(), check=check)


def effective_resistance(g: Graph, x) -> tuple[np.ndarray, float]:
    """Pairwise effective resistances and their sum over unordered pairs.

    ``R_ij = (M_ij + M_ji) / sum(x)`` with the sum running over all edges.
    """
    x = np.asarray(x, dtype=float)
    if not is_symmetric_weights(g, x, tol=1e-12):
        raise GraphError("effective resistance needs symmetric edge weights")
    rev = g.reciprocal_index()
    if np.any((rev < 0) & (g.tails != g.heads)):
        raise GraphError("effective resistance needs every edge paired with its reverse")
    M = mfpt_matrix(transition_matrix(g, x))
    R = (M + M.T) / x.sum()
    np.fill_diagonal(R, 0.0)
    return R, float(np.sum(np.triu(R, 1)))
