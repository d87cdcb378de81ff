"""Directed graphs, edge indexing and weight-to-transition-matrix maps."""
from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphError


@dataclass(frozen=True)
class Correlation:
    """Joint failure specification for the risky edges.

    ``mode`` is one of ``"independent"``, ``"reciprocal"`` (an edge and its
    reverse fail together) or ``"correlated"`` (exchangeable latent-normal
    model with correlation ``rho``).
    """

    mode: str = "independent"
    rho: float = 0.0

    def __post_init__(self):
        if self.mode not in ("independent", "reciprocal", "correlated"):
            raise GraphError(f"unknown correlation mode {self.mode!r}")
        if not 0.0 <= self.rho < 1.0:
            raise GraphError(f"rho must lie in [0, 1), got {self.rho}")


@dataclass(frozen=True)
class Graph:
    """Finite directed graph with a fixed lexicographic edge order.

    Nodes are ``0..n_nodes-1``. Edge ``k`` is ``edges[k]``; edges leaving
    node ``i`` occupy the contiguous index range ``block(i)``, which is what
    makes the concatenated weight vector layout work.

    Parameters
    ----------
    n_nodes : int
    edges : sequence of (int, int)
        Directed pairs. Sorted on construction.
    risky : dict, optional
        Maps a directed edge to its failure probability.
    correlation : Correlation, optional
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    risky: dict = field(default_factory=dict)
    correlation: Correlation = field(default_factory=Correlation)
    name: str = ""

    def __post_init__(self):
        n = int(self.n_nodes)
        if n < 1:
            raise GraphError("graph needs at least one node")
        edges = tuple(sorted((int(i), int(j)) for i, j in self.edges))
        if len(set(edges)) != len(edges):
            dup = sorted({e for e in edges if edges.count(e) > 1})
            raise GraphError(f"duplicate edges: {dup}")
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) references a node outside 0..{n - 1}")
        risky = {(int(i), int(j)): float(q) for (i, j), q in dict(self.risky).items()}
        eset = set(edges)
        for e, q in risky.items():
            if e not in eset:
                raise GraphError(f"risky edge {e} is not an edge of the graph")
            if not 0.0 <= q <= 1.0:
                raise GraphError(f"failure probability {q} of edge {e} outside [0, 1]")
        object.__setattr__(self, "n_nodes", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "risky", risky)

        tails = np.array([e[0] for e in edges], dtype=np.intp)
        heads = np.array([e[1] for e in edges], dtype=np.intp)
        starts = np.searchsorted(tails, np.arange(n + 1))
        object.__setattr__(self, "_tails", tails)
        object.__setattr__(self, "_heads", heads)
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_index", {e: k for k, e in enumerate(edges)})

    # -- indexing ---------------------------------------------------------
    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def tails(self) -> np.ndarray:
        return self._tails

    @property
    def heads(self) -> np.ndarray:
        return self._heads

    def edge_index(self, i: int, j: int) -> int:
        try:
            return self._index[(i, j)]
        except KeyError:
            raise GraphError(f"({i}, {j}) is not an edge") from None

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self._index

    def block(self, i: int) -> slice:
        """Index range of the edges leaving node ``i``."""
        return slice(int(self._starts[i]), int(self._starts[i + 1]))

    @property
    def block_starts(self) -> np.ndarray:
        return self._starts

    def out_degrees(self) -> np.ndarray:
        return np.diff(self._starts)

    # -- risky edges ------------------------------------------------------
    @property
    def risky_edges(self) -> list[tuple[int, int]]:
        return sorted(self.risky)

    @property
    def risky_indices(self) -> np.ndarray:
        return np.array([self._index[e] for e in self.risky_edges], dtype=np.intp)

    @property
    def failure_probabilities(self) -> np.ndarray:
        return np.array([self.risky[e] for e in self.risky_edges])

    def backbone_edges(self) -> list[tuple[int, int]]:
        return [e for e in self.edges if e not in self.risky]

    # -- derived graphs ---------------------------------------------------
    def bidirectional_subgraph(self) -> "Graph":
        """Keep only edges whose reverse is also present (self-loops kept)."""
        keep = [(i, j) for i, j in self.edges if self.has_edge(j, i)]
        risky = {e: q for e, q in self.risky.items() if e in set(keep)}
        return Graph(self.n_nodes, keep, risky, self.correlation, self.name + "-bidirectional")

    def reciprocal_index(self) -> np.ndarray:
        """Index of the reverse of each edge, or -1 when it is absent."""
        return np.array([self._index.get((j, i), -1) for i, j in self.edges], dtype=np.intp)

    def digest(self) -> str:
        payload = json.dumps(
            {
                "nodes": self.n_nodes,
                "edges": [list(e) for e in self.edges],
                "risky": [[i, j, q] for (i, j), q in sorted(self.risky.items())],
                "correlation": [self.correlation.mode, self.correlation.rho],
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_document(self) -> dict:
        """File representation (1-based node labels)."""
        doc = {
            "nodes": self.n_nodes,
            "edges": [[i + 1, j + 1] for i, j in self.edges],
            "risky_edges": [[i + 1, j + 1, q] for (i, j), q in sorted(self.risky.items())],
        }
        if self.correlation != Correlation():
            doc["correlation"] = {"mode": self.correlation.mode, "rho": self.correlation.rho}
        if self.name:
            doc["name"] = self.name
        return doc


def graph_from_document(doc: dict, check_backbone: bool = True) -> Graph:
    """Build a :class:`Graph` from a parsed graph document.

    The document uses 1-based node labels. Besides ``edges`` it may list
    ``bidirectional`` pairs, each expanding to both directions. Risky edges
    are ``[i, j, q]`` triples; under ``correlation: {mode: reciprocal}``
    the reverse of each risky edge is made risky with the same probability.
    """
    try:
        n = int(doc["nodes"])
        raw = [tuple(e) for e in doc.get("edges", [])]
        for i, j in doc.get("bidirectional", []):
            raw += [(i, j), (j, i)]
        edges = [(int(i) - 1, int(j) - 1) for i, j in raw]
        risky = {}
        for item in doc.get("risky_edges", []):
            i, j, q = int(item[0]) - 1, int(item[1]) - 1, float(item[2])
            risky[(i, j)] = q
        corr = doc.get("correlation") or {}
        correlation = Correlation(corr.get("mode", "independent"), float(corr.get("rho", 0.0)))
        if correlation.mode == "reciprocal":
            for (i, j), q in list(risky.items()):
                risky.setdefault((j, i), q)
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"malformed graph document: {exc}") from exc
    g = Graph(n, edges, risky, correlation, str(doc.get("name", "")))
    if check_backbone and not is_strongly_connected(g, g.backbone_edges()):
        raise GraphError("graph without its risky edges is not strongly connected")
    return g


def load_graph(source) -> Graph:
    """Load a graph from a JSON/YAML file path, a JSON string, or a dict."""
    if isinstance(source, dict):
        return graph_from_document(source)
    text = None
    path = Path(source) if not str(source).lstrip().startswith("{") else None
    if path is not None:
        try:
            text = path.read_text()
        except OSError as exc:
            raise GraphError(f"cannot read graph file {source}: {exc}") from exc
    else:
        text = str(source)
    try:
        if path is not None and path.suffix in (".yaml", ".yml"):
            import yaml

            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
    except Exception as exc:
        raise GraphError(f"cannot parse graph document: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphError("graph document must be a mapping")
    return graph_from_document(doc)


def _reach(n: int, adj: list[list[int]], start: int = 0) -> np.ndarray:
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def is_strongly_connected(g: Graph | int, edges: Iterable[tuple[int, int]] | None = None) -> bool:
    """Forward and backward reachability from node 0 over ``edges``."""
    n = g if isinstance(g, int) else g.n_nodes
    if edges is None:
        edges = g.edges
    fwd = [[] for _ in range(n)]
    bwd = [[] for _ in range(n)]
    for i, j in edges:
        fwd[i].append(j)
        bwd[j].append(i)
    return bool(_reach(n, fwd).all() and _reach(n, bwd).all())


def support_is_irreducible(P: np.ndarray, tol: float = 1e-14) -> bool:
    rows, cols = np.nonzero(P > tol)
    return is_strongly_connected(P.shape[0], zip(rows.tolist(), cols.tolist()))


def transition_matrix(g: Graph, x: Sequence[float]) -> np.ndarray:
    """Row-normalised transition matrix P(x) on the graph ``g``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n_edges,):
        raise GraphError(f"weight vector has shape {x.shape}, expected ({g.n_edges},)")
    sums = np.bincount(g.tails, weights=x, minlength=g.n_nodes)
    if np.any(sums <= 0):
        bad = np.flatnonzero(sums <= 0).tolist()
        raise GraphError(f"nodes {bad} have zero outgoing weight")
    P = np.zeros((g.n_nodes, g.n_nodes))
    P[g.tails, g.heads] = x / sums[g.tails]
    return P


def transition_derivative(g: Graph, x: Sequence[float], delta: Sequence[float]) -> np.ndarray:
    """Directional derivative of ``transition_matrix(g, x)`` along ``delta``.

    On the plain equality set (unit block sums, ``A @ delta == 0``) this is
    just ``delta`` placed at the edge entries.
    """
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    sums = np.bincount(g.tails, weights=x, minlength=g.n_nodes)
    dsums = np.bincount(g.tails, weights=delta, minlength=g.n_nodes)
    s = sums[g.tails]
    out = np.zeros((g.n_nodes, g.n_nodes))
    out[g.tails, g.heads] = (delta * s - x * dsums[g.tails]) / s**2
    return out


def uniform_weights(g: Graph) -> np.ndarray:
    """Each node spreads its unit mass evenly over its out-edges."""
    deg = g.out_degrees()
    if np.any(deg == 0):
        raise GraphError("graph has a node without outgoing edges")
    return 1.0 / deg[g.tails]


def weights_from_matrix(g: Graph, P: np.ndarray) -> np.ndarray:
    return np.asarray(P)[g.tails, g.heads].astype(float)


def check_reversible(P: np.ndarray, pi: np.ndarray, tol: float = 1e-9) -> bool:
    """Detailed balance ``pi_i P_ij == pi_j P_ji`` up to ``tol``."""
    flow = np.asarray(pi)[:, None] * np.asarray(P)
    return bool(np.max(np.abs(flow - flow.T)) <= tol)


def is_symmetric_weights(g: Graph, x: Sequence[float], tol: float = 0.0) -> bool:
    x = np.asarray(x, dtype=float)
    rev = g.reciprocal_index()
    has = rev >= 0
    return bool(np.all(np.abs(x[has] - x[rev[has]]) <= tol))
