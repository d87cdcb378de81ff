"""Random-walk patrolling against intruders that appear one after another.

Intruder ``k`` appears at time ``k * tau`` on a random node and stays for
``tau`` steps. The agent moves synchronously on integer times; it captures
the intruder when it stands on that node at any time of the window.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GraphError
from .failures import FailureModel, failed_mask, redistribute, sample_edge_sets
from .graph import Graph, transition_matrix


@dataclass
class SimulationSpec:
    """Simulation settings.

    ``include_arrival`` counts a capture when the agent already stands on
    the node at the appearance instant; the window is then times
    ``t0 .. t0 + tau - 1``, otherwise ``t0 + 1 .. t0 + tau``.
    ``persist_agent=False`` redraws the agent position from ``agent_start``
    at every appearance.
    """

    intruder_count: int = 500
    residence_window: int = 45
    intruder_distribution: np.ndarray | None = None
    agent_start: np.ndarray | None = None
    random_support: bool = False
    replications: int = 500
    seed: int = 0
    include_arrival: bool = True
    persist_agent: bool = True

    def validate(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.residence_window < 1:
            raise ConfigError("residence window must be >= 1")
        if self.intruder_count < 1 or self.replications < 1:
            raise ConfigError("need at least one intruder and one replication")
        out = []
        for name, d in (("intruder", self.intruder_distribution), ("agent start", self.agent_start)):
            d = np.full(n, 1.0 / n) if d is None else np.asarray(d, dtype=float)
            if d.shape != (n,) or np.any(d < 0) or abs(d.sum() - 1) > 1e-9:
                raise ConfigError(f"{name} distribution must be a probability vector of length {n}")
            out.append(d / d.sum())
        return out[0], out[1]


@dataclass
class CaptureStats:
    percentages: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def min(self) -> float:
        return float(self.percentages.min())

    @property
    def max(self) -> float:
        return float(self.percentages.max())

    @property
    def mean(self) -> float:
        return float(self.percentages.mean())

    @property
    def std(self) -> float:
        return float(self.percentages.std(ddof=1)) if self.percentages.size > 1 else 0.0

    @property
    def sem(self) -> float:
        return self.std / np.sqrt(self.percentages.size)

    def row(self) -> dict:
        return {"min": self.min, "mean": self.mean, "max": self.max, "sd": self.std}


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row of ``cum``."""
    idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, cum.shape[1] - 1)


def simulate(
    policy,
    spec: SimulationSpec,
    graph: Graph | None = None,
    failure: FailureModel | None = None,
) -> CaptureStats:
    """Capture percentages across independent replications.

    Parameters
    ----------
    policy : array
        Either an ``N x N`` stochastic matrix or an edge weight vector (then
        ``graph`` is required).
    spec : SimulationSpec
    graph : Graph, optional
    failure : FailureModel, optional
        Used when ``spec.random_support``; each replication draws one
        realization and walks on the redistributed policy.
    """
    policy = np.asarray(policy, dtype=float)
    if policy.ndim == 1:
        if graph is None:
            raise GraphError("a weight vector policy needs its graph")
        P = transition_matrix(graph, policy)
    else:
        P = policy
    n = P.shape[0]
    if np.any(P < -1e-12) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-9):
        raise GraphError("policy is not a stochastic matrix")
    intr, start = spec.validate(n)
    R = spec.replications
    ss = np.random.SeedSequence(spec.seed)
    support_ss, walk_ss = ss.spawn(2)
    rng = np.random.default_rng(walk_ss)

    if spec.random_support:
        if failure is None or graph is None:
            raise ConfigError("random support needs a graph and a failure model")
        reals = sample_edge_sets(failure, R, np.random.default_rng(support_ss))
        Ps = np.stack([redistribute(P, failed_mask(graph, failure, r)) for r in reals])
    else:
        Ps = np.broadcast_to(P, (R, n, n))
    cum = np.cumsum(Ps, axis=2)
    cum[:, :, -1] = 1.0
    rows = np.arange(R)
    cum_start = np.cumsum(start)
    cum_intr = np.cumsum(intr)

    tau = spec.residence_window
    state = _draw(np.broadcast_to(cum_start, (R, n)), rng.random(R))
    caught = np.zeros(R, dtype=np.int64)
    for _ in range(spec.intruder_count):
        target = _draw(np.broadcast_to(cum_intr, (R, n)), rng.random(R))
        if not spec.persist_agent:
            state = _draw(np.broadcast_to(cum_start, (R, n)), rng.random(R))
        hit = state == target if spec.include_arrival else np.zeros(R, dtype=bool)
        steps = tau - 1 if spec.include_arrival else tau
        for _ in range(steps):
            state = _draw(cum[rows, state], rng.random(R))
            hit |= state == target
        if spec.include_arrival:
            # last move of the window hands over to the next appearance time
            state = _draw(cum[rows, state], rng.random(R))
        caught += hit
    return CaptureStats(percentages=100.0 * caught / spec.intruder_count)


def write_stats_table(path, rows: list[tuple[str, CaptureStats, float]]) -> None:
    """Delimited table with columns policy, min, mean, max, sd, objective."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("policy", "min", "mean", "max", "sd", "objective"))
        for name, st, obj in rows:
            w.writerow((name, f"{st.min:.2f}", f"{st.mean:.2f}", f"{st.max:.2f}", f"{st.std:.2f}", f"{obj:.6g}"))
