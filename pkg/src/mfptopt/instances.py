"""Stock graph instances used by the tests, the CLI and the examples."""
from __future__ import annotations

import numpy as np

from .graph import Correlation, Graph

# Pentagram-form pentagonal prism: outer star (i, i+2), spokes (i, i+5) and
# inner star (5+i, 5+(i+2) mod 5), all bidirectional except for one chord
# of each star and the spoke 1-6, which are kept in one direction only.
_PRISM_OUTER = [(i, (i + 2) % 5) for i in range(5)]
_PRISM_SPOKES = [(i, i + 5) for i in range(5)]
_PRISM_INNER = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
PETERSEN_ONE_WAY = ((0, 2), (6, 1), (7, 5))
PETERSEN_RISKY = ((3, 0), (0, 3), (7, 9), (9, 7))


def petersen_digraph(q: float = 0.2) -> Graph:
    """Ten-node benchmark digraph with 27 directed edges.

    Contains a directed Hamiltonian cycle. Its three one-way edges are the
    only edges dropped by :meth:`Graph.bidirectional_subgraph`. Four
    bidirectional edges are marked risky with failure probability ``q``;
    removing them leaves a strongly connected backbone.
    """
    one_way = set(PETERSEN_ONE_WAY)
    edges = []
    for a, b in _PRISM_OUTER + _PRISM_SPOKES + _PRISM_INNER:
        if (a, b) in one_way or (b, a) in one_way:
            edges.append((a, b) if (a, b) in one_way else (b, a))
        else:
            edges += [(a, b), (b, a)]
    return Graph(10, edges, risky={e: q for e in PETERSEN_RISKY}, name="petersen")


def cycle_graph(n: int, bidirectional: bool = False) -> Graph:
    edges = [(i, (i + 1) % n) for i in range(n)]
    if bidirectional:
        edges += [((i + 1) % n, i) for i in range(n)]
        edges = sorted(set(edges))
    return Graph(n, edges, name=f"cycle{n}")


def complete_graph(n: int, self_loops: bool = False) -> Graph:
    edges = [(i, j) for i in range(n) for j in range(n) if self_loops or i != j]
    return Graph(n, edges, name=f"complete{n}")


def star_graph(n: int) -> Graph:
    """Node 0 joined both ways to leaves ``1..n-1``."""
    edges = [(0, j) for j in range(1, n)] + [(j, 0) for j in range(1, n)]
    return Graph(n, edges, name=f"star{n}")


def two_node_graph() -> Graph:
    """Two nodes, both self-loops and both cross edges."""
    return Graph(2, [(0, 0), (0, 1), (1, 0), (1, 1)], name="two_node")


def grid_graph(
    rows: int,
    cols: int,
    self_loops: bool = False,
    risky: dict | None = None,
    correlation: Correlation | None = None,
) -> Graph:
    """Four-neighbour grid with bidirectional edges; node ``r * cols + c``."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if self_loops:
                edges.append((v, v))
            if c + 1 < cols:
                edges += [(v, v + 1), (v + 1, v)]
            if r + 1 < rows:
                edges += [(v, v + cols), (v + cols, v)]
    return Graph(
        rows * cols,
        edges,
        risky=risky or {},
        correlation=correlation or Correlation(),
        name=f"grid{rows}x{cols}",
    )


def surveillance_grid(q: float = 0.3, rows: int = 4, cols: int = 6, mode: str = "independent") -> Graph:
    """Reduced surveillance arena with a handful of risky corridor edges.

    The risky edges are the two directions of three interior horizontal
    links, so a failure pair never disconnects the grid.
    """
    links = []
    mid = rows // 2
    for c in (0, cols // 2, cols - 2):
        v = mid * cols + c
        links.append((v, v + 1))
    risky = {}
    for a, b in links:
        risky[(a, b)] = q
        risky[(b, a)] = q
    return grid_graph(rows, cols, risky=risky, correlation=Correlation(mode))


ARENA_ROWS, ARENA_COLS = 8, 9
ARENA_OBSTACLE = (39, 40, 48, 49)


def surveillance_arena(q: float = 0.1, n_risky: int = 0) -> Graph:
    """68-node arena: an 8 x 9 grid with a 2 x 2 obstacle in the middle.

    The obstacle removes two cells of each checkerboard colour, so the
    bipartite grid still admits a uniform stationary law. The first
    ``n_risky`` links of :data:`ARENA_RISKY_LINKS` fail in both directions
    with probability ``q``.
    """
    full = grid_graph(ARENA_ROWS, ARENA_COLS)
    blocked = set(ARENA_OBSTACLE)
    keep = [v for v in range(full.n_nodes) if v not in blocked]
    relabel = {v: k for k, v in enumerate(keep)}
    edges = [(relabel[i], relabel[j]) for i, j in full.edges if i not in blocked and j not in blocked]
    risky = {}
    for a, b in ARENA_RISKY_LINKS[:n_risky]:
        risky[(relabel[a], relabel[b])] = q
        risky[(relabel[b], relabel[a])] = q
    return Graph(len(keep), edges, risky=risky, name="arena68")


# Interior links of the full 8 x 9 grid (original cell labels), chosen so
# that removing any subset keeps the arena strongly connected.
ARENA_RISKY_LINKS = (
    (10, 11), (12, 21), (14, 15), (19, 28), (22, 23), (24, 33), (29, 30), (31, 32),
    (46, 55), (51, 52), (56, 57), (58, 59), (60, 61), (64, 65), (66, 67),
)


def random_digraph(n: int, rng: np.random.Generator, density: float = 0.4, self_loops: bool = True) -> Graph:
    """Random strongly connected digraph: a random Hamiltonian cycle plus
    independent extra edges."""
    perm = rng.permutation(n)
    edges = {(int(perm[k]), int(perm[(k + 1) % n])) for k in range(n)} if n > 1 else set()
    for i in range(n):
        for j in range(n):
            if (i != j or self_loops) and rng.random() < density:
                edges.add((i, j))
    if n == 1:
        edges.add((0, 0))
    return Graph(n, sorted(edges), name=f"random{n}")


BUILTIN = {
    "petersen": petersen_digraph,
    "two_node": two_node_graph,
    "surveillance_grid": surveillance_grid,
    "arena68": surveillance_arena,
}


def builtin(name: str) -> Graph:
    """Resolve ``cycleN``, ``completeN``, ``gridRxC`` or a named instance."""
    import re

    if name in BUILTIN:
        return BUILTIN[name]()
    m = re.fullmatch(r"cycle(\d+)", name)
    if m:
        return cycle_graph(int(m.group(1)))
    m = re.fullmatch(r"complete(\d+)", name)
    if m:
        return complete_graph(int(m.group(1)))
    m = re.fullmatch(r"grid(\d+)x(\d+)", name)
    if m:
        return grid_graph(int(m.group(1)), int(m.group(2)))
    raise KeyError(f"unknown builtin instance {name!r}")
