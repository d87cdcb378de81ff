"""Quick oracle suites behind ``mfptopt verify``.

Each suite returns ``(name, passed, detail)``. Sizes are kept small so the
whole run takes a few seconds.
"""
from __future__ import annotations

import numpy as np

from .analysis import analyze, connectivity_objective, kemeny_constant
from .directions import basis_derivatives, system_for
from .graph import Graph, transition_matrix
from .instances import complete_graph, cycle_graph, petersen_digraph, random_digraph
from .oracles import (
    brute_force_qp_projection,
    cycle_chain,
    finite_difference_directional,
    hamiltonian_cycle_search,
    mfpt_first_step,
    random_irreducible_chain,
    hamiltonian_cycle_value,
    closed_form_values,
)
from .projections import project_affine, project_scaled_simplex
from .spsa import infeasibility_demo


def _mfpt(rng):
    worst = 0.0
    for _ in range(50):
        P = random_irreducible_chain(int(rng.integers(3, 9)), rng)
        worst = max(worst, float(np.max(np.abs(analyze(P).M - mfpt_first_step(P)))))
    return worst < 1e-8, f"max deviation {worst:.2e}"


def _kemeny(rng):
    worst = 0.0
    for _ in range(50):
        P = random_irreducible_chain(int(rng.integers(3, 9)), rng)
        an = analyze(P)
        worst = max(worst, abs(kemeny_constant(P) - np.trace(an.D) - 1), float(np.max(np.abs(np.diag(an.M) * an.pi - 1))))
    return worst < 1e-9, f"max deviation {worst:.2e}"


def _closed_forms(rng):
    bad = []
    for n in range(2, 13):
        S = connectivity_objective(cycle_chain(list(range(n)), n))
        if round(S, 9) != hamiltonian_cycle_value(n):
            bad.append(("cycle", n, S))
    cyc = hamiltonian_cycle_search(petersen_digraph())
    if cyc is None or round(connectivity_objective(cycle_chain(cyc, 10)), 9) != 450:
        bad.append(("petersen", cyc))
    for n in range(3, 9):
        lo, hi = closed_form_values(n)
        g = complete_graph(n)
        Sk = connectivity_objective(transition_matrix(g, np.ones(g.n_edges)))
        g = cycle_graph(n, bidirectional=True)
        Sc = connectivity_objective(transition_matrix(g, np.ones(g.n_edges)))
        if abs(Sk - lo) > 1e-6 or abs(Sc - hi) > 1e-6:
            bad.append(("bounds", n, Sk, Sc))
    return not bad, "all values match" if not bad else f"mismatches {bad}"


def _derivatives(rng):
    worst = 0.0
    for _ in range(20):
        g = random_digraph(int(rng.integers(3, 8)), rng)
        system = system_for(g, "simplex")
        if system.dim == 0:
            continue
        x = rng.random(g.n_edges) + 0.2
        x /= np.bincount(g.tails, x)[g.tails]
        col = int(rng.integers(system.dim))
        v = system.B[:, col]
        exact = basis_derivatives(g, x, None, system.B[:, [col]])[0]
        fd = finite_difference_directional(lambda y: connectivity_objective(transition_matrix(g, y)), x, v)
        worst = max(worst, abs(exact - fd) / max(abs(fd), 1.0))
    return worst < 1e-5, f"max relative error {worst:.2e}"


def _projections(rng):
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 6))
        v = rng.normal(size=n)
        ref = brute_force_qp_projection(v, np.ones((1, n)), [1.0], 0.0, None)
        worst = max(worst, float(np.max(np.abs(project_scaled_simplex(v) - ref))))
        g = Graph(2, [(0, 0), (0, 1), (1, 0), (1, 1)])
        system = system_for(g, "simplex")
        x = rng.normal(size=4)
        worst = max(worst, float(np.max(np.abs(project_affine(x, system) - brute_force_qp_projection(x, system.A, system.b)))))
    return worst < 1e-6, f"max deviation {worst:.2e}"


def _infeasibility(rng):
    rep = infeasibility_demo(rng=rng)
    ok = (not rep.naive_in_simplex_set) and rep.constrained_in_simplex_set
    return ok, f"naive row sums {np.round(rep.naive_row_sums, 6).tolist()}"


SUITES = {
    "mfpt_first_step": _mfpt,
    "kemeny_identity": _kemeny,
    "closed_form_values": _closed_forms,
    "derivatives": _derivatives,
    "projections": _projections,
    "infeasibility": _infeasibility,
}


def run_all(seed: int = 0):
    rng = np.random.default_rng(seed)
    for name, fn in SUITES.items():
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # report, do not abort the remaining suites
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
