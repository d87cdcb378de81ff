"""Brute-force reference computations.

Nothing here calls into :mod:`mfptopt.analysis`, :mod:`mfptopt.directions`,
:mod:`mfptopt.projections` or :mod:`mfptopt.spsa`; the tests use these to
check those modules.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .graph import Graph


def mfpt_first_step(P) -> np.ndarray:
    """First-step analysis: for each target j, ``m = 1 + P_{:, -j} m_{-j}``."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    M = np.empty((n, n))
    for j in range(n):
        Pj = P.copy()
        Pj[:, j] = 0.0
        M[:, j] = np.linalg.solve(np.eye(n) - Pj, np.ones(n))
    return M


def power_iteration_stationary(P, iters: int = 100_000, tol: float = 1e-15) -> np.ndarray:
    """Stationary law by iterating the lazy chain ``(I + P) / 2``."""
    P = np.asarray(P, dtype=float)
    lazy = 0.5 * (np.eye(len(P)) + P)
    v = np.full(len(P), 1.0 / len(P))
    for _ in range(iters):
        w = v @ lazy
        if np.max(np.abs(w - v)) < tol:
            return w
        v = w
    return v


def hamiltonian_cycle_search(g: Graph, max_nodes: int = 16) -> list[int] | None:
    """Depth-first search for a directed Hamiltonian cycle starting at node 0."""
    n = g.n_nodes
    if n > max_nodes:
        raise ValueError(f"backtracking search is limited to {max_nodes} nodes")
    succ = [[j for (i, j) in g.edges if i == u and j != u] for u in range(n)]
    if n == 1:
        return [0] if g.has_edge(0, 0) else None
    path = [0]
    used = [False] * n
    used[0] = True

    def extend() -> bool:
        if len(path) == n:
            return 0 in succ[path[-1]]
        for v in succ[path[-1]]:
            if not used[v]:
                used[v] = True
                path.append(v)
                if extend():
                    return True
                path.pop()
                used[v] = False
        return False

    return list(path) if extend() else None


def cycle_chain(cycle: list[int], n: int) -> np.ndarray:
    """Deterministic permutation matrix following ``cycle``."""
    P = np.zeros((n, n))
    for a, b in zip(cycle, cycle[1:] + cycle[:1]):
        P[a, b] = 1.0
    return P


def hamiltonian_cycle_value(n: int) -> float:
    """Sum of off-diagonal MFPTs of a Hamiltonian tour: ``(n^3 - n^2) / 2``."""
    return (n**3 - n**2) / 2


def closed_form_values(n: int) -> tuple[float, float]:
    """Complete-graph and cycle-graph values bracketing the reversible optimum."""
    if n < 3:
        raise ValueError("bounds need n >= 3")
    return float(n**3 - 2 * n**2 + n), (n**4 - n**2) / 6


def finite_difference_directional(J, x, delta, h: float = 1e-6) -> float:
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    return (J(x + h * delta) - J(x - h * delta)) / (2 * h)


def projected_fd_gradient(J, x, B, h: float = 1e-6) -> np.ndarray:
    """``-sum_i dJ/dv_i v_i`` with each derivative from central differences."""
    B = np.asarray(B, dtype=float)
    if B.shape[1] == 0:
        return np.zeros(B.shape[0])
    coeffs = np.array([finite_difference_directional(J, x, B[:, i], h) for i in range(B.shape[1])])
    return -B @ coeffs


def exhaustive_spsa_expectation(J, x, B, eta: float, max_dim: int = 12) -> np.ndarray:
    """Mean of the two-point null-space estimate over every sign vector."""
    x = np.asarray(x, dtype=float)
    B = np.asarray(B, dtype=float)
    dim = B.shape[1]
    if dim == 0:
        return np.zeros(B.shape[0])
    if dim > max_dim:
        raise ValueError(f"2^{dim} perturbations is too many to enumerate")
    total = np.zeros(B.shape[0])
    count = 0
    for signs in itertools.product((-1.0, 1.0), repeat=dim):
        step = B @ np.array(signs)
        total += (J(x - eta * step) - J(x + eta * step)) / (2 * eta) * step
        count += 1
    return total / count


def brute_force_qp_projection(x, A=None, b=None, lo=None, hi=None):
    """Euclidean projection onto ``{r : A r = b, lo <= r <= hi}`` by
    enumerating every active set (each coordinate at lo, at hi, or free)
    and keeping the closest KKT-feasible candidate. Meant for ``len(x) <= 6``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    lo = np.full(n, -np.inf) if lo is None else np.broadcast_to(np.asarray(lo, float), (n,))
    hi = np.full(n, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, float), (n,))
    best, best_d = None, math.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        if np.any((pattern == 1) & ~np.isfinite(lo)) or np.any((pattern == 2) & ~np.isfinite(hi)):
            continue
        r = x.copy()
        r[pattern == 1] = lo[pattern == 1]
        r[pattern == 2] = hi[pattern == 2]
        free = pattern == 0
        if A.shape[0]:
            resid = b - A[:, ~free] @ r[~free]
            Af = A[:, free]
            # closest point to x[free] on {Af z = resid}
            z0 = x[free]
            if Af.shape[1]:
                corr, *_ = np.linalg.lstsq(Af @ Af.T, resid - Af @ z0, rcond=None)
                r[free] = z0 + Af.T @ corr
            if np.max(np.abs(A @ r - b), initial=0.0) > 1e-9:
                continue
        if np.any(r < lo - 1e-12) or np.any(r > hi + 1e-12):
            continue
        d = float(np.sum((r - x) ** 2))
        if d < best_d - 1e-15:
            best, best_d = r, d
    return best


def random_irreducible_chain(n: int, rng: np.random.Generator, density: float = 0.5) -> np.ndarray:
    """Random transition matrix whose support contains a Hamiltonian cycle."""
    mask = rng.random((n, n)) < density
    perm = rng.permutation(n)
    for a, b in zip(perm, np.roll(perm, -1)):
        mask[a, b] = True
    W = rng.random((n, n)) * mask + 1e-3 * mask
    return W / W.sum(axis=1, keepdims=True)


def bivariate_threshold_joint(q: float, rho: float, nodes: int = 4001) -> float:
    """P(Z1 < t, Z2 < t) for standard normals with correlation ``rho``,
    ``t = Phi^{-1}(q)``, by trapezoidal quadrature over the shared factor."""
    from scipy.special import ndtr, ndtri

    t = ndtri(q)
    w = np.linspace(-10.0, 10.0, nodes)
    dens = np.exp(-0.5 * w**2) / math.sqrt(2 * math.pi)
    cond = ndtr((t - math.sqrt(rho) * w) / math.sqrt(1.0 - rho))
    return float(np.trapezoid(dens * cond**2, w))
