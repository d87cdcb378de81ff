"""Linear constraint systems, null-space bases and analytical directional
derivatives of the MFPT objective."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import ChainAnalytics, ConnectivityWeights, _as_weights, analyze
from .errors import ConfigError, GraphError, InfeasibleError
from .graph import Graph, transition_derivative, transition_matrix

RANK_TOL = 1e-10
PIVOT_TOL = 1e-10


def rref(T, tol: float = PIVOT_TOL) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form with partial pivoting.

    Returns the nonzero rows and the pivot columns.
    """
    R = np.array(T, dtype=float)
    rows, cols = R.shape
    scale = max(1.0, np.max(np.abs(R), initial=0.0))
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[p, c]) <= tol * scale:
            R[r:, c] = 0.0
            continue
        R[[r, p]] = R[[p, r]]
        R[r] /= R[r, c]
        others = np.arange(rows) != r
        R[others] -= np.outer(R[others, c], R[r])
        pivots.append(c)
        r += 1
    return R[:r], pivots


def null_space_basis(A, tol: float = RANK_TOL) -> tuple[np.ndarray, int]:
    """Orthonormal basis of ``null(A)`` from the SVD, and the rank of ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n), 0
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[rank:].T.copy(), rank


@dataclass(frozen=True)
class ConstraintSystem:
    """``A x = b`` with independent rows, plus an orthonormal null-space basis."""

    A: np.ndarray
    b: np.ndarray
    B: np.ndarray
    rank: int
    kind: str = "simplex"

    @classmethod
    def from_augmented(cls, T, kind: str = "affine") -> "ConstraintSystem":
        R, pivots = rref(T)
        n = R.shape[1] - 1
        if n in pivots:
            raise InfeasibleError("linear constraints are inconsistent")
        A, b = R[:, :n], R[:, n]
        B, rank = null_space_basis(A)
        return cls(A=A, b=b, B=B, rank=rank, kind=kind)

    @property
    def dim(self) -> int:
        """Number of free directions."""
        return self.B.shape[1]

    @property
    def particular(self) -> np.ndarray:
        """Minimum-norm solution ``A^+ b``."""
        if self.A.shape[0] == 0:
            return np.zeros(self.A.shape[1])
        return self.A.T @ np.linalg.solve(self.A @ self.A.T, self.b)

    def residual(self, x) -> float:
        if self.A.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.A @ np.asarray(x) - self.b)))


def _block_rows(g: Graph) -> np.ndarray:
    A = np.zeros((g.n_nodes, g.n_edges))
    A[g.tails, np.arange(g.n_edges)] = 1.0
    return A


def equality_system(g: Graph) -> ConstraintSystem:
    """Unit out-weight per node."""
    A = _block_rows(g)
    B, rank = null_space_basis(A)
    return ConstraintSystem(A=A, b=np.ones(g.n_nodes), B=B, rank=rank, kind="simplex")


def stationary_system(g: Graph, target_pi) -> ConstraintSystem:
    """Unit out-weights plus ``pihat P(x) = pihat``, with dependent rows removed."""
    pihat = np.asarray(target_pi, dtype=float)
    if pihat.shape != (g.n_nodes,) or np.any(pihat <= 0) or abs(pihat.sum() - 1) > 1e-12:
        raise InfeasibleError("target distribution must be strictly positive and sum to 1")
    A1 = _block_rows(g)
    A2 = np.zeros((g.n_nodes, g.n_edges))
    A2[g.heads, np.arange(g.n_edges)] = pihat[g.tails]
    T = np.block([[A1, np.ones((g.n_nodes, 1))], [A2, pihat[:, None]]])
    return ConstraintSystem.from_augmented(T, kind="stationary")


def symmetric_system(g: Graph) -> ConstraintSystem:
    """Unit out-weights plus ``x_(i,j) = x_(j,i)``; every edge needs its reverse."""
    rev = g.reciprocal_index()
    if np.any(rev < 0):
        missing = [g.edges[k] for k in np.flatnonzero(rev < 0)]
        raise InfeasibleError(f"edges without a reverse cannot carry symmetric weight: {missing}")
    pairs = [(k, int(r)) for k, r in enumerate(rev) if k < r]
    S = np.zeros((len(pairs), g.n_edges))
    for row, (k, r) in enumerate(pairs):
        S[row, k] = 1.0
        S[row, r] = -1.0
    A1 = _block_rows(g)
    T = np.block([[A1, np.ones((g.n_nodes, 1))], [S, np.zeros((len(pairs), 1))]])
    return ConstraintSystem.from_augmented(T, kind="symmetric")


@dataclass(frozen=True)
class DirectionalDerivatives:
    dPi: np.ndarray
    dD: np.ndarray
    dM: np.ndarray
    dS: float


def directional_derivatives(P, Pprime, analytics: ChainAnalytics | None = None, C=None) -> DirectionalDerivatives:
    """Exact first-order change of Pi, D, M and S when P moves along Pprime.

    ``Pi' = Pi P' D``, ``D' = D P' D - Pi' D`` and ``M'`` from differentiating
    ``M = (I - D + 1 1^T dg(D)) dg(Pi)^{-1}``.
    """
    an = analytics if analytics is not None else analyze(P)
    Pp = np.asarray(Pprime, dtype=float)
    n = len(an.pi)
    PD = Pp @ an.D
    dPi = an.Pi @ PD
    dD = an.D @ PD - dPi @ an.D
    dpi = dPi[0]
    inv_pi = 1.0 / an.pi
    ones = np.ones(n)
    base = np.eye(n) - an.D + np.outer(ones, np.diag(an.D))
    dM = (-dD + np.outer(ones, np.diag(dD))) * inv_pi[None, :] - base * (dpi * inv_pi**2)[None, :]
    W = _as_weights(C)
    Cm = W.resolve(n, an.pi)
    dS = float(np.sum(Cm * dM))
    if W.depends_on_chain:
        dC = np.outer(dpi, an.pi) + np.outer(an.pi, dpi)
        dS += float(np.sum(dC * an.M))
    return DirectionalDerivatives(dPi=dPi, dD=dD, dM=dM, dS=dS)


def basis_derivatives(g: Graph, x, C, B) -> np.ndarray:
    """``dS/dv`` for every column ``v`` of ``B`` at the weights ``x``."""
    x = np.asarray(x, dtype=float)
    P = transition_matrix(g, x)
    an = analyze(P)
    return np.array(
        [directional_derivatives(P, transition_derivative(g, x, B[:, i]), an, C).dS for i in range(B.shape[1])]
    )


def steepest_feasible_descent(g: Graph, x, C, system: ConstraintSystem, normalize: bool = True) -> np.ndarray:
    """``-sum_i (dS/dv_i) v_i`` over the null-space basis, scaled to unit 2-norm.

    Returns the zero vector for an empty basis or at a stationary point.
    """
    if system.dim == 0:
        return np.zeros(g.n_edges)
    direction = -system.B @ basis_derivatives(g, x, C, system.B)
    if not normalize:
        return direction
    norm = np.linalg.norm(direction)
    if norm < 1e-12:
        return np.zeros(g.n_edges)
    return direction / norm


def system_for(g: Graph, constraint: str, target_pi=None) -> ConstraintSystem:
    if constraint == "simplex":
        return equality_system(g)
    if constraint == "stationary":
        if target_pi is None:
            target_pi = np.full(g.n_nodes, 1.0 / g.n_nodes)
        return stationary_system(g, target_pi)
    if constraint == "symmetric":
        return symmetric_system(g)
    raise ConfigError(f"unknown constraint {constraint!r}")
