"""Euclidean projections onto the weight constraint sets."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError


def _simplex_rows(V: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Project each row of ``V`` (``-inf`` = padding) onto ``{w >= 0, sum w = mass}``."""
    s = -np.sort(-V, axis=1)
    finite = np.isfinite(s)
    css = np.cumsum(np.where(finite, s, 0.0), axis=1)
    k = np.arange(1, V.shape[1] + 1)
    cond = finite & (s * k - (css - mass[:, None]) > 0)
    rho = np.maximum(cond.sum(axis=1), 1)
    theta = (css[np.arange(V.shape[0]), rho - 1] - mass) / rho
    return np.maximum(V - theta[:, None], 0.0)


def project_scaled_simplex(v, epsilon: float = 0.0) -> np.ndarray:
    """Closest point of ``{w : w >= epsilon, sum(w) = 1}`` to ``v``.

    Shifts by ``epsilon`` and projects onto the simplex of mass
    ``1 - epsilon * len(v)`` with the sort-and-threshold rule.
    """
    v = np.asarray(v, dtype=float)
    mass = 1.0 - epsilon * v.size
    if mass < -1e-15:
        raise InfeasibleError(f"epsilon={epsilon} is too large for a block of {v.size} entries")
    w = _simplex_rows((v - epsilon)[None, :], np.array([max(mass, 0.0)]))[0]
    return w + epsilon


class BlockProjector:
    """Blockwise :func:`project_scaled_simplex` with the padding layout cached."""

    def __init__(self, block_starts, epsilon: float = 0.0):
        starts = np.asarray(block_starts)
        deg = np.diff(starts)
        mass = 1.0 - epsilon * deg
        if np.any(mass < -1e-15):
            raise InfeasibleError(f"epsilon={epsilon} is too large for the largest out-degree {deg.max()}")
        self.epsilon = epsilon
        self.mass = np.maximum(mass, 0.0)
        self.rows = np.repeat(np.arange(len(deg)), deg)
        self.cols = np.arange(int(starts[-1])) - starts[self.rows]
        self.shape = (len(deg), max(int(deg.max(initial=0)), 1))

    def __call__(self, x) -> np.ndarray:
        V = np.full(self.shape, -np.inf)
        V[self.rows, self.cols] = np.asarray(x, dtype=float) - self.epsilon
        W = _simplex_rows(V, self.mass)
        return W[self.rows, self.cols] + self.epsilon


def project_blocks(x, block_starts, epsilon: float = 0.0) -> np.ndarray:
    """Blockwise :func:`project_scaled_simplex` over contiguous blocks."""
    return BlockProjector(block_starts, epsilon)(x)


def project_box(x, lo, hi) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=float), lo, hi)


def affine_projector(system) -> tuple[np.ndarray, np.ndarray]:
    """``(B B^T, A^+ b)`` so that the projection is ``BBt @ (x - x0) + x0``."""
    return system.B @ system.B.T, system.particular


def project_affine(x, system) -> np.ndarray:
    """Closest point with ``A r = b``: ``B B^T (x - A^+ b) + A^+ b``."""
    BBt, x0 = affine_projector(system)
    return BBt @ (np.asarray(x, dtype=float) - x0) + x0


@dataclass
class DykstraState:
    a: np.ndarray
    b: np.ndarray
    p: np.ndarray
    iterations: int
    converged: bool


def dykstra(x, system, lo, hi=np.inf, tol: float = 1e-10, max_iter: int = 10_000, projector=None) -> DykstraState:
    """Dykstra's alternating projections onto ``{A r = b}`` and a box.

    Only the box step carries a correction term; the affine step needs none.
    Stops when successive affine iterates move less than ``tol`` and the
    affine iterate lies within ``tol`` of the box iterate; the first test
    alone can fire while the iteration is merely stalling.
    """
    BBt, x0 = projector if projector is not None else affine_projector(system)
    b = np.asarray(x, dtype=float).copy()
    p = np.zeros_like(b)
    a = b
    for n in range(1, max_iter + 1):
        y = b + p
        a = np.clip(y, lo, hi)
        p = y - a
        b_new = BBt @ (a - x0) + x0
        if np.max(np.abs(b_new - b)) < tol and np.max(np.abs(b_new - a)) < tol:
            return DykstraState(a, b_new, p, n, True)
        b = b_new
    return DykstraState(a, b, p, max_iter, False)


def dykstra_project(x, system, epsilon: float, tol: float = 1e-10, max_iter: int = 10_000, hi=None, projector=None) -> np.ndarray:
    """Projection onto ``{A r = b, epsilon <= r <= hi}``.

    ``hi`` defaults to ``1 - epsilon``. Warns (rather than raising) when
    ``max_iter`` is hit and returns the last affine iterate.
    """
    if hi is None:
        hi = 1.0 - epsilon
    state = dykstra(x, system, epsilon, hi, tol, max_iter, projector)
    if not state.converged:
        warnings.warn(f"Dykstra projection did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return state.b
