"""Constrained SPSA for MFPT objectives on the weight polytope.

Perturbations live in the null space of the equality constraints, so both
evaluation points keep unit row sums; the margin ``epsilon`` and the bound
on ``eta`` keep them strictly positive.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .analysis import _as_weights, fast_objective
from .directions import ConstraintSystem, system_for
from .errors import ConfigError, GraphError, InfeasibleError
from .failures import (
    ENUMERATION_CAP,
    FailureModel,
    enumerate_realizations,
    failed_mask,
    redistribute,
    sample_edge_sets,
)
from .graph import Graph, is_strongly_connected, transition_matrix, uniform_weights
from .projections import BlockProjector, affine_projector, dykstra

log = logging.getLogger(__name__)


@dataclass
class SpsaConfig:
    """Gain sequences ``alpha / (alpha0 + k + 1)^gamma_alpha`` and
    ``eta / (k + 1)^gamma_eta``, interior margin, stopping rule and
    bookkeeping knobs."""

    alpha: float = 0.01
    alpha0: float = 100_000.0
    gamma_alpha: float = 0.602
    eta: float = 1e-8
    gamma_eta: float = 0.2
    epsilon: float = 1e-4
    seed: int = 0
    eval_interval: int = 1000
    tol: float = 1e-3
    max_iterations: int = 5_000_000
    min_checkpoints: int = 2
    max_step_norm: float | None = None
    restarts: int = 1
    shrinking_epsilon: bool = False
    epsilon_decay: float = 0.101
    samples_per_iteration: int = 1
    eval_samples: int = 1000
    exact_eval: bool = True
    dykstra_tol: float = 1e-10
    dykstra_max_iter: int = 10_000

    def gains(self, k: int) -> tuple[float, float]:
        return gain_sequences(k, self)

    def validate(self, dim: int) -> None:
        """Check the step-size and perturbation-size assumptions."""
        if self.alpha <= 0 or self.alpha0 < 0:
            raise ConfigError("need alpha > 0 and alpha0 >= 0")
        if not 0.5 < self.gamma_alpha <= 1.0:
            raise ConfigError(f"gamma_alpha={self.gamma_alpha} must lie in (1/2, 1]")
        if not self.gamma_eta > (1.0 - self.gamma_alpha) / 2:
            raise ConfigError(f"gamma_eta={self.gamma_eta} must exceed (1 - gamma_alpha)/2")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if dim > 0 and not 0 < self.eta < self.epsilon / math.sqrt(dim):
            raise ConfigError(
                f"eta={self.eta} must lie in (0, epsilon/sqrt(dim)) = (0, {self.epsilon / math.sqrt(dim):.3g})"
            )
        if self.eval_interval < 1 or self.max_iterations < 0:
            raise ConfigError("eval_interval must be >= 1 and max_iterations >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SpsaConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# Reference gain settings of the four experiment families.
REFERENCE_GAINS = {
    "scalability": dict(alpha=0.01, alpha0=100_000, eta=1e-8, gamma_alpha=0.602, gamma_eta=0.2),
    "correlated": dict(alpha=0.01, alpha0=100_000, eta=1e-8, gamma_alpha=0.602, gamma_eta=0.2),
    "surveillance_fixed": dict(alpha=1.0, alpha0=500_000, eta=1e-8, gamma_alpha=0.602, gamma_eta=0.2),
    "surveillance_random": dict(alpha=0.001, alpha0=50_000, eta=1e-8, gamma_alpha=0.602, gamma_eta=0.2),
}

EVAL_INTERVALS = {
    "scalability": 50_000,
    "correlated": 50_000,
    "surveillance_fixed": 1_000,
    "surveillance_random": 10_000,
}


# Desk-scale settings tuned for the ten-node benchmark and the reduced
# surveillance grid. Larger steps with a cap on the update norm reach the
# same optima within a few tens of thousands of iterations.
TUNED = {
    "petersen": dict(
        alpha=1.0, alpha0=100_000, eta=1e-8, gamma_alpha=0.602, gamma_eta=0.2,
        max_step_norm=0.02, eval_interval=5_000, max_iterations=40_000,
    ),
    "surveillance_random_desk": dict(
        alpha=1.0, alpha0=500_000, eta=1e-8, gamma_alpha=0.602, gamma_eta=0.2,
        eval_interval=5_000, max_iterations=40_000,
    ),
}


def preset(name: str, **overrides) -> SpsaConfig:
    """Reference settings by experiment family, or one of the tuned presets."""
    if name in TUNED:
        params = dict(TUNED[name], epsilon=1e-4)
    elif name in REFERENCE_GAINS:
        params = dict(REFERENCE_GAINS[name], eval_interval=EVAL_INTERVALS[name], epsilon=1e-4)
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(REFERENCE_GAINS) + sorted(TUNED)}")
    params.update(overrides)
    return SpsaConfig(**params)


def gain_sequences(k: int, cfg: SpsaConfig) -> tuple[float, float]:
    alpha_k = cfg.alpha / (cfg.alpha0 + k + 1) ** cfg.gamma_alpha
    eta_k = cfg.eta / (k + 1) ** cfg.gamma_eta
    return alpha_k, eta_k


def sample_perturbation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Rademacher vector."""
    if dim < 1:
        raise ValueError("perturbation dimension must be >= 1")
    return rng.integers(0, 2, size=dim).astype(float) * 2.0 - 1.0


def spsa_direction(J: Callable[[np.ndarray], float], x, B, delta, eta: float) -> np.ndarray:
    """``[J(x - eta B d) - J(x + eta B d)] / (2 eta) * B d``."""
    step = np.asarray(B) @ np.asarray(delta, dtype=float)
    x = np.asarray(x, dtype=float)
    return (J(x - eta * step) - J(x + eta * step)) / (2 * eta) * step


def polyak_ruppert_average(iterates, checkpoint_index: int, interval: int) -> np.ndarray:
    """Mean of ``x(k)`` for ``k = floor(l i / 2), ..., l i`` (both ends included)."""
    iterates = np.asarray(iterates, dtype=float)
    end = interval * checkpoint_index
    start = end // 2
    if end >= len(iterates):
        raise ValueError(f"need iterates up to k={end}, have {len(iterates) - 1}")
    return iterates[start : end + 1].mean(axis=0)


class Problem:
    """An MFPT objective on a graph together with its feasible set.

    Parameters
    ----------
    graph : Graph
    C : ConnectivityWeights or array, optional
        Defaults to ``11^T - I``.
    constraint : {"simplex", "stationary", "symmetric"}
    target_pi : array, optional
        Required stationary law for ``constraint="stationary"`` (uniform if
        omitted).
    failure : FailureModel, optional
        Turns on random support.
    mode : {"fixed", "random", "online"}
        ``random`` samples realizations from ``failure`` each iteration;
        ``online`` takes them from ``realization_source(k)``.
    """

    def __init__(
        self,
        graph: Graph,
        C=None,
        constraint: str = "simplex",
        target_pi=None,
        failure: FailureModel | None = None,
        mode: str = "fixed",
        realization_source: Callable[[int], np.ndarray] | None = None,
    ):
        if mode not in ("fixed", "random", "online"):
            raise ConfigError(f"unknown mode {mode!r}")
        if mode != "fixed" and failure is None:
            raise ConfigError(f"mode {mode!r} needs a failure model")
        if mode == "online" and realization_source is None:
            raise ConfigError("online mode needs a realization source")
        if failure is not None:
            risky = set(failure.edges)
            if not is_strongly_connected(graph, [e for e in graph.edges if e not in risky]):
                raise GraphError("graph without its risky edges is not strongly connected")
        self.graph = graph
        self.C = _as_weights(C)
        self.constraint = constraint
        self.target_pi = None if target_pi is None else np.asarray(target_pi, dtype=float)
        self.system: ConstraintSystem = system_for(graph, constraint, target_pi)
        self.failure = failure
        self.mode = mode
        self.realization_source = realization_source
        self._projector = affine_projector(self.system) if constraint != "simplex" else None
        self._block_projectors: dict[float, BlockProjector] = {}
        n = graph.n_nodes
        self._flat = graph.tails * n + graph.heads

    # -- objectives -------------------------------------------------------
    def _score(self, P) -> float:
        return fast_objective(P, self.C)

    def matrix(self, x) -> np.ndarray:
        """:func:`transition_matrix` without the input checks."""
        g = self.graph
        n = g.n_nodes
        sums = np.bincount(g.tails, weights=x, minlength=n)
        P = np.zeros(n * n)
        P[self._flat] = x / sums[g.tails]
        return P.reshape(n, n)

    def objective(self, x, failed_masks=None) -> float:
        """``S(P(x), C)``, or its mean over the given failure masks."""
        P = self.matrix(x)
        if failed_masks is None:
            return self._score(P)
        return float(np.mean([self._score(redistribute(P, m)) for m in failed_masks]))

    def masks(self, realizations) -> list[np.ndarray]:
        return [failed_mask(self.graph, self.failure, r) for r in np.atleast_2d(realizations)]

    # -- feasible set -----------------------------------------------------
    def upper_bounds(self, epsilon: float) -> np.ndarray:
        deg = self.graph.out_degrees()[self.graph.tails]
        return 1.0 - epsilon * (deg - 1)

    def project(self, x, epsilon: float, tol: float = 1e-10, max_iter: int = 10_000) -> tuple[np.ndarray, bool]:
        if self.constraint == "simplex":
            proj = self._block_projectors.get(epsilon)
            if proj is None:
                if len(self._block_projectors) > 8:
                    self._block_projectors.clear()
                proj = self._block_projectors[epsilon] = BlockProjector(self.graph.block_starts, epsilon)
            return proj(x), True
        st = dykstra(x, self.system, epsilon, self.upper_bounds(epsilon), tol, max_iter, self._projector)
        return st.b, st.converged

    def residual(self, x, epsilon: float) -> float:
        return max(self.system.residual(x), float(np.max(epsilon - np.asarray(x), initial=0.0)))

    def initial_point(self, epsilon: float, rng: np.random.Generator | None = None) -> np.ndarray:
        """Uniform out-weights, or a random Dirichlet interior point, projected."""
        if rng is None:
            x = uniform_weights(self.graph)
        else:
            x = rng.gamma(1.0, size=self.graph.n_edges)
            sums = np.bincount(self.graph.tails, weights=x, minlength=self.graph.n_nodes)
            x = x / sums[self.graph.tails]
        x, ok = self.project(x, epsilon)
        if not ok or self.residual(x, epsilon) > 1e-8:
            raise InfeasibleError(f"could not find a feasible starting point for the {self.constraint} constraint")
        return x


class CheckpointEvaluator:
    """Objective used to score averaged iterates at checkpoints."""

    def __init__(self, problem: Problem, cfg: SpsaConfig):
        self.problem = problem
        self.cases: list[tuple[float, np.ndarray | None]] = [(1.0, None)]
        self.online_window: list[np.ndarray] = []
        fm = problem.failure
        if problem.mode == "random":
            exact = cfg.exact_eval and fm.mode != "correlated" and fm.n_units <= min(ENUMERATION_CAP, 12)
            if exact:
                self.cases = [
                    (p, failed_mask(problem.graph, fm, alive)) for alive, p in enumerate_realizations(fm) if p > 0
                ]
            else:
                rng = np.random.default_rng([cfg.seed, 0xE7A1])
                reals = sample_edge_sets(fm, cfg.eval_samples, rng)
                w = 1.0 / len(reals)
                self.cases = [(w, failed_mask(problem.graph, fm, r)) for r in reals]

    def observe(self, masks):
        if self.problem.mode == "online":
            self.online_window.extend(masks)

    def __call__(self, x) -> float:
        P = transition_matrix(self.problem.graph, x)
        if self.problem.mode == "online":
            masks = self.online_window or [np.zeros_like(P, dtype=bool)]
            self.online_window = []
            return float(np.mean([self.problem._score(redistribute(P, m)) for m in masks]))
        total = 0.0
        for w, m in self.cases:
            total += w * self.problem._score(P if m is None else redistribute(P, m))
        return total


@dataclass
class OptimizationTrace:
    """Checkpoint rows plus the averaged and raw iterates at each checkpoint."""

    iterations: list[int] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    averages: list[np.ndarray] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)
    x_initial: np.ndarray | None = None
    x_final: np.ndarray | None = None
    objective_final: float = math.nan
    reason: str = ""
    rejected_steps: int = 0
    seed: int = 0
    restart: int = 0

    COLUMNS = ("iteration", "objective", "gradient_norm", "feasibility_residual")

    def rows(self):
        return list(zip(self.iterations, self.objectives, self.grad_norms, self.residuals))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for it, obj, gn, res in self.rows():
                w.writerow([it, repr(float(obj)), repr(float(gn)), repr(float(res))])

    def write_timing(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("iteration", "wall_clock_s"))
            for it, t in zip(self.iterations, self.wall_clock):
                w.writerow([it, f"{t:.6f}"])


_BATCH = 256


def _shrunk_epsilon(cfg: SpsaConfig, k: int) -> float:
    return cfg.epsilon / (k + 1) ** cfg.epsilon_decay


def run_spsa(
    problem: Problem,
    cfg: SpsaConfig,
    x0=None,
    rng: np.random.Generator | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> OptimizationTrace:
    """One projected SPSA run.

    Iterates ``x(k+1) = Proj[x(k) + alpha(k) * dtilde_k]``. Every
    ``eval_interval`` steps the tail average of the last half of the
    iterates is projected and scored; the run stops once two consecutive
    scores differ by less than ``tol`` or after ``max_iterations`` steps.
    """
    B = problem.system.B
    dim = B.shape[1]
    cfg.validate(dim)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    real_rng = np.random.default_rng([cfg.seed, 0x5EED])
    eps = cfg.epsilon
    x = problem.initial_point(eps) if x0 is None else problem.project(np.asarray(x0, float), eps)[0]
    trace = OptimizationTrace(x_initial=x.copy(), seed=cfg.seed)
    evaluate = CheckpointEvaluator(problem, cfg)

    if dim == 0:
        trace.x_final = x
        trace.objective_final = evaluate(x)
        trace.reason = "no_free_directions"
        return trace

    l = cfg.eval_interval
    # prefix sums of iterates, snapshotted where checkpoint windows start
    running = x.copy()
    snapshots = {-1: np.zeros_like(x)}
    next_start = lambda i: (l * i) // 2 - 1  # noqa: E731
    pending = 1
    if next_start(pending) == 0:
        snapshots[0] = running.copy()
    grad_sq = 0.0
    t0 = time.perf_counter()
    prev_obj = None
    checkpoint = 0
    k = 0
    reason = "max_iterations"
    masks = None
    while k < cfg.max_iterations:
        alpha_k, eta_k = gain_sequences(k, cfg)
        if cfg.shrinking_epsilon:
            eps = max(_shrunk_epsilon(cfg, k), 1e-12)
            eta_k = min(eta_k, 0.5 * eps / math.sqrt(dim))
        if k % _BATCH == 0:
            deltas = rng.integers(0, 2, size=(_BATCH, dim)).astype(float) * 2.0 - 1.0
        step = B @ deltas[k % _BATCH]
        if problem.mode == "random":
            reals = sample_edge_sets(problem.failure, cfg.samples_per_iteration, real_rng)
            masks = problem.masks(reals)
        elif problem.mode == "online":
            masks = problem.masks(problem.realization_source(k))
            evaluate.observe(masks)
        j_minus = problem.objective(x - eta_k * step, masks)
        j_plus = problem.objective(x + eta_k * step, masks)
        dtilde = (j_minus - j_plus) / (2 * eta_k) * step
        update = alpha_k * dtilde
        if cfg.max_step_norm is not None:
            norm = np.linalg.norm(update)
            if norm > cfg.max_step_norm:
                update *= cfg.max_step_norm / norm
        x_new, ok = problem.project(x + update, eps, cfg.dykstra_tol, cfg.dykstra_max_iter)
        if ok:
            x = x_new
        else:
            # an unconverged projection may be infeasible; skip the step
            trace.rejected_steps += 1
            log.warning("projection did not converge at iteration %d; step skipped", k)
        k += 1
        running += x
        grad_sq += float(dtilde @ dtilde)
        if callback is not None:
            callback(k, x)
        # snapshot the prefix sum just before a future window start
        s = next_start(pending)
        while s <= k:
            if s == k:
                snapshots[s] = running.copy()
            pending += 1
            s = next_start(pending)
        if k % l == 0:
            checkpoint += 1
            start = (l * checkpoint) // 2
            avg = (running - snapshots[start - 1]) / (k - start + 1)
            for key in [s for s in snapshots if s < start - 1]:
                del snapshots[key]
            avg, _ = problem.project(avg, eps, cfg.dykstra_tol, cfg.dykstra_max_iter)
            obj = evaluate(avg)
            trace.iterations.append(k)
            trace.objectives.append(obj)
            trace.grad_norms.append(math.sqrt(grad_sq / l))
            trace.residuals.append(problem.residual(x, eps))
            trace.wall_clock.append(time.perf_counter() - t0)
            trace.averages.append(avg)
            trace.iterates.append(x.copy())
            grad_sq = 0.0
            log.debug("k=%d objective=%.6f", k, obj)
            if prev_obj is not None and checkpoint >= cfg.min_checkpoints and abs(obj - prev_obj) < cfg.tol:
                reason = "converged"
                break
            prev_obj = obj
    if trace.averages:
        trace.x_final = trace.averages[-1]
        trace.objective_final = trace.objectives[-1]
    else:
        trace.x_final = x
        trace.objective_final = evaluate(x)
    trace.reason = reason
    return trace


def restart_plan(problem: Problem, cfg: SpsaConfig) -> list[tuple[SpsaConfig, np.ndarray | None]]:
    """Per-restart configs and starting points.

    Restart 0 starts from uniform weights, the others from seeded random
    interior points. Each restart owns a child seed of ``cfg.seed``, so the
    plan does not depend on how the restarts are scheduled.
    """
    plan = []
    for r, ss in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)):
        x0 = None if r == 0 else problem.initial_point(cfg.epsilon, np.random.default_rng(ss))
        plan.append((dataclasses.replace(cfg, seed=int(ss.generate_state(1)[0]), restarts=1), x0))
    return plan


def optimize(problem: Problem, cfg: SpsaConfig, callback=None) -> list[OptimizationTrace]:
    """Run every restart of :func:`restart_plan` in order and return the traces."""
    traces = []
    for r, (run_cfg, x0) in enumerate(restart_plan(problem, cfg)):
        tr = run_spsa(problem, run_cfg, x0=x0, callback=callback)
        tr.restart = r
        traces.append(tr)
    return traces


def best_trace(traces: list[OptimizationTrace]) -> OptimizationTrace:
    return min(traces, key=lambda t: t.objective_final)


@dataclass
class InfeasibilityReport:
    naive_row_sums: np.ndarray
    naive_min_entry: float
    naive_in_simplex_set: bool
    constrained_row_sums: list[np.ndarray]
    constrained_min_entry: float
    constrained_in_simplex_set: bool


def _in_stochastic_set(P, tol=1e-12) -> bool:
    return bool(np.all(P >= -tol) and np.all(np.abs(P.sum(axis=1) - 1) <= tol))


K3_UNIFORM = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
NAIVE_DELTA = np.array([1.0, 1.0, -1.0, 1.0, 1.0, 1.0])


def infeasibility_demo(P=K3_UNIFORM, delta=NAIVE_DELTA, eta: float = 0.01, rng=None) -> InfeasibilityReport:
    """Contrast a naive full-space perturbation with the null-space one.

    The naive step adds ``eta * delta`` straight to the edge weights; the
    constrained estimator perturbs along ``B @ Delta`` instead.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    edges = [(i, j) for i in range(n) for j in range(n) if P[i, j] > 0]
    g = Graph(n, edges)
    x = P[g.tails, g.heads]
    naive = np.zeros_like(P)
    naive[g.tails, g.heads] = x + eta * np.asarray(delta, dtype=float)
    system = system_for(g, "simplex")
    rng = rng if rng is not None else np.random.default_rng(0)
    sums, mins = [], []
    for sign in (-1.0, 1.0):
        d = sample_perturbation(system.dim, rng)
        Q = np.zeros_like(P)
        Q[g.tails, g.heads] = x + sign * eta * (system.B @ d)
        sums.append(Q.sum(axis=1))
        mins.append(float(Q[g.tails, g.heads].min()))
    return InfeasibilityReport(
        naive_row_sums=naive.sum(axis=1),
        naive_min_entry=float(naive[g.tails, g.heads].min()),
        naive_in_simplex_set=_in_stochastic_set(naive),
        constrained_row_sums=sums,
        constrained_min_entry=min(mins),
        constrained_in_simplex_set=all(np.all(np.abs(s - 1) <= 1e-12) for s in sums) and min(mins) >= 0,
    )
