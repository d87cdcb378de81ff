"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed at the end of the session by
the hook in conftest.py) and then asserts the criterion.
"""
import math
import time
import warnings

import numpy as np
import pytest

from mfptopt.analysis import (
    ConnectivityWeights,
    analyze,
    connectivity_objective,
    fast_objective,
    kemeny_constant,
    mfpt_matrix,
)
from mfptopt.cli import main as cli_main
from mfptopt.directions import (
    ConstraintSystem,
    directional_derivatives,
    equality_system,
    steepest_feasible_descent,
)
from mfptopt.failures import (
    FailureModel,
    expected_objective_enumerate,
    expected_stationary,
    failed_mask,
    redistribute,
    sample_edge_sets,
)
from mfptopt.graph import Graph, transition_derivative, transition_matrix, uniform_weights
from mfptopt.instances import (
    complete_graph,
    cycle_graph,
    petersen_digraph,
    random_digraph,
    surveillance_arena,
    surveillance_grid,
    two_node_graph,
)
from mfptopt.oracles import (
    brute_force_qp_projection,
    cycle_chain,
    exhaustive_spsa_expectation,
    finite_difference_directional,
    hamiltonian_cycle_search,
    mfpt_first_step,
    random_irreducible_chain,
    hamiltonian_cycle_value,
    closed_form_values,
)
from mfptopt.projections import dykstra_project, project_affine, project_scaled_simplex
from mfptopt.spsa import (
    NAIVE_DELTA,
    K3_UNIFORM,
    Problem,
    SpsaConfig,
    best_trace,
    infeasibility_demo,
    optimize,
    preset,
    run_spsa,
)
from mfptopt.surveillance import SimulationSpec, simulate

from conftest import record_criterion


def _corpus(seed=1, count=200):
    rng = np.random.default_rng(seed)
    return [random_irreducible_chain(int(rng.integers(3, 9)), rng) for _ in range(count)]


def _finish(number, title, ok, detail, elapsed, budget):
    within = elapsed < budget
    record_criterion(number, title, ok and within, f"{detail}; {elapsed:.1f}s (budget {budget:.0f}s)")
    assert ok, detail
    assert within, f"took {elapsed:.1f}s, budget {budget}s"


def test_c01_mfpt_oracle():
    t0 = time.perf_counter()
    err = max(float(np.max(np.abs(mfpt_matrix(P) - mfpt_first_step(P)))) for P in _corpus())
    _finish(1, "MFPT oracle equivalence", err < 1e-8, f"max abs error {err:.2e}", time.perf_counter() - t0, 10)


def test_c02_kemeny_identity():
    t0 = time.perf_counter()
    worst_k = worst_r = 0.0
    for P in _corpus():
        an = analyze(P)
        worst_k = max(worst_k, abs(kemeny_constant(P) - (np.trace(an.D) + 1)))
        worst_r = max(worst_r, float(np.max(np.abs(np.diag(an.M) * an.pi - 1))))
    ok = worst_k < 1e-9 and worst_r < 1e-9
    _finish(2, "Kemeny identity", ok, f"K error {worst_k:.1e}, return-time error {worst_r:.1e}", time.perf_counter() - t0, 5)


def test_c03_hamiltonian_cycles():
    t0 = time.perf_counter()
    bad = []
    for n in range(2, 13):
        cycle = hamiltonian_cycle_search(cycle_graph(n))
        s = connectivity_objective(cycle_chain(cycle, n))
        if abs(s - round(s)) > 1e-9 or round(s) != hamiltonian_cycle_value(n):
            bad.append(n)
    pet = petersen_digraph()
    s_pet = connectivity_objective(cycle_chain(hamiltonian_cycle_search(pet), pet.n_nodes))
    ok = not bad and round(s_pet) == 450 and abs(s_pet - 450) < 1e-9
    _finish(3, "Hamiltonian cycle values", ok, f"cycles off at N={bad}, Petersen cycle S={s_pet:.9f}", time.perf_counter() - t0, 5)


def test_c04_closed_forms():
    t0 = time.perf_counter()
    errs = []
    for n in range(3, 9):
        g = complete_graph(n)
        errs.append(abs(connectivity_objective(transition_matrix(g, uniform_weights(g))) - closed_form_values(n)[0]))
    for n in range(3, 13):
        g = cycle_graph(n, bidirectional=True)
        errs.append(abs(connectivity_objective(transition_matrix(g, np.ones(g.n_edges))) - closed_form_values(n)[1]))
    gap = all(hamiltonian_cycle_value(n) < closed_form_values(n)[0] for n in range(3, 13))
    ok = max(errs) < 1e-6 and gap
    _finish(4, "Complete-graph and cycle values", ok, f"max error {max(errs):.1e}, price of reversibility positive: {gap}", time.perf_counter() - t0, 5)


def test_c05_derivatives():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(100):
        g = random_digraph(int(rng.integers(2, 9)), rng)
        s = equality_system(g)
        if s.dim == 0:
            g = complete_graph(3, self_loops=True)
            s = equality_system(g)
        x = rng.random(g.n_edges) + 0.2
        x /= np.bincount(g.tails, x)[g.tails]
        v = s.B[:, int(rng.integers(s.dim))]
        C = [None, ConnectivityWeights.kemeny()][trial % 2]
        P = transition_matrix(g, x)
        exact = directional_derivatives(P, transition_derivative(g, x, v), C=C).dS
        J = lambda y: connectivity_objective(transition_matrix(g, y), C)  # noqa: E731
        fd = finite_difference_directional(J, x, v, h=1e-6)
        scale = max(abs(fd), abs(exact))
        worst = max(worst, abs(exact - fd) / scale if scale > 1e-12 else 0.0)
    _finish(5, "Derivative correctness", worst < 1e-5, f"max relative error {worst:.1e}", time.perf_counter() - t0, 30)


def test_c06_bias_law():
    t0 = time.perf_counter()
    g = two_node_graph()
    s = equality_system(g)
    x = np.array([0.3, 0.7, 0.6, 0.4])
    J = lambda y: connectivity_objective(transition_matrix(g, y))  # noqa: E731
    exact = steepest_feasible_descent(g, x, None, s, normalize=False)
    errs = [np.linalg.norm(exhaustive_spsa_expectation(J, x, s.B, eta) - exact) for eta in (1e-2, 5e-3, 2.5e-3)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    quad = lambda y: float(y @ y)  # noqa: E731
    quad_err = float(np.max(np.abs(exhaustive_spsa_expectation(quad, x, s.B, 1e-2) + s.B @ (s.B.T @ (2 * x)))))
    ok = all(3.5 <= r <= 4.5 for r in ratios) and quad_err < 1e-12
    _finish(6, "SPSA bias law", ok, f"ratios {np.round(ratios, 4).tolist()}, quadratic error {quad_err:.1e}", time.perf_counter() - t0, 10)


def _projection_problem(rng, kind):
    n = int(rng.integers(2, 7))
    x = rng.normal(scale=0.7, size=n) + 1.0 / n
    eps = float(rng.choice([0.0, 0.05, 0.1]))
    if kind == "simplex":
        return x, eps, None
    m = int(rng.integers(1, n))
    A = rng.normal(size=(m, n))
    z = eps + (1 - 2 * eps) * rng.random(n)
    return x, eps, ConstraintSystem.from_augmented(np.column_stack([A, A @ z]))


def test_c07_projections():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = idem = 0.0
    for kind in ("simplex", "affine", "dykstra"):
        for _ in range(50):
            x, eps, system = _projection_problem(rng, kind)
            if kind == "simplex":
                f = lambda v: project_scaled_simplex(v, eps)  # noqa: E731
                ref = brute_force_qp_projection(x, np.ones((1, x.size)), [1.0], eps)
            elif kind == "affine":
                f = lambda v: project_affine(v, system)  # noqa: E731
                ref = brute_force_qp_projection(x, system.A, system.b)
            else:
                f = lambda v: dykstra_project(v, system, eps, tol=1e-13, max_iter=200_000)  # noqa: E731
                ref = brute_force_qp_projection(x, system.A, system.b, eps, 1 - eps)
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                y = f(x)
                worst = max(worst, float(np.max(np.abs(y - ref))))
                idem = max(idem, float(np.max(np.abs(f(y) - y))))
    ok = worst < 1e-6 and idem < 1e-12
    _finish(7, "Projection correctness", ok, f"max deviation {worst:.1e}, idempotence {idem:.1e}", time.perf_counter() - t0, 10)


def test_c08_petersen():
    t0 = time.perf_counter()
    g = petersen_digraph()
    traces = optimize(Problem(g), preset("petersen", restarts=10, seed=0))
    directed = best_trace(traces).objective_final
    sym = run_spsa(Problem(g.bidirectional_subgraph(), constraint="symmetric"), preset("petersen", seed=0))
    ok = directed <= 472.5 and sym.objective_final <= 1544.3
    per_restart = ", ".join(f"{t.objective_final:.1f}" for t in traces)
    detail = f"directed best {directed:.2f} (restarts {per_restart}); symmetric {sym.objective_final:.2f}"
    _finish(8, "Petersen optimization", ok, detail, time.perf_counter() - t0, 20 * 60)


def test_c09_random_support():
    t0 = time.perf_counter()
    g = petersen_digraph(q=0.3)
    fm = FailureModel.from_graph(g)
    rng = np.random.default_rng(9)
    x = rng.random(g.n_edges) + 0.2
    x /= np.bincount(g.tails, x)[g.tails]
    P = transition_matrix(g, x)
    exact = expected_objective_enumerate(g, x, None, fm)
    reals = sample_edge_sets(fm, 100_000, rng)
    row_err = 0.0
    cache = {}
    total = 0.0
    for r in reals:
        Q = redistribute(P, failed_mask(g, fm, r))
        row_err = max(row_err, float(np.max(np.abs(Q.sum(axis=1) - 1))))
        key = r.tobytes()
        if key not in cache:
            cache[key] = fast_objective(Q, ConnectivityWeights.ones())
        total += cache[key]
    mc = total / len(reals)
    rel = abs(mc - exact) / exact
    ok = len(fm.edges) <= 5 and rel < 0.01 and row_err < 1e-12
    _finish(9, "Random-support consistency", ok, f"MC {mc:.4f} vs exact {exact:.4f} (rel {rel:.1e}), row error {row_err:.1e}", time.perf_counter() - t0, 300)


def test_c10_stationary_caveat():
    t0 = time.perf_counter()
    g = surveillance_grid(q=0.5)
    pihat = np.full(g.n_nodes, 1 / g.n_nodes)
    x = Problem(g, constraint="stationary", target_pi=pihat).initial_point(1e-4)
    fixed_gap = float(np.max(np.abs(analyze(transition_matrix(g, x)).pi - pihat)))
    gap = float(np.max(np.abs(expected_stationary(g, x, FailureModel.from_graph(g)) - pihat)))
    ok = fixed_gap < 1e-9 and gap > 1e-3
    _finish(10, "Stationary-constraint caveat", ok, f"|pi(P)-pihat| {fixed_gap:.1e}, |E[pi(Q)]-pihat| {gap:.2e}", time.perf_counter() - t0, 60)


SURVEILLANCE_TAU = 16
SURVEILLANCE_REPS = 200


def _surveillance_pair(g, fm, fixed_preset):
    pihat = np.full(g.n_nodes, 1 / g.n_nodes)
    C = ConnectivityWeights.target(pihat)
    mode = "fixed" if fm is None else "random"
    out = {}
    for constraint in ("stationary", "symmetric"):
        problem = Problem(g, C=C, constraint=constraint, target_pi=pihat, failure=fm, mode=mode)
        tr = run_spsa(problem, fixed_preset)
        spec = SimulationSpec(
            residence_window=SURVEILLANCE_TAU, replications=SURVEILLANCE_REPS, seed=3, random_support=fm is not None
        )
        out[constraint] = (tr.objective_final, simulate(tr.x_final, spec, g, fm))
    return out


def test_c11_surveillance_ordering():
    t0 = time.perf_counter()
    lines, ok = [], True
    cases = [
        ("fixed", surveillance_grid(), None, preset("surveillance_fixed", max_iterations=20_000)),
    ]
    g_rand = surveillance_grid(q=0.5)
    cases.append(("random", g_rand, FailureModel.from_graph(g_rand), preset("surveillance_random_desk")))
    for label, g, fm, cfg in cases:
        res = _surveillance_pair(g, fm, cfg)
        (s_obj, s_st), (r_obj, r_st) = res["stationary"], res["symmetric"]
        diff = s_st.mean - r_st.mean
        se = math.hypot(s_st.sem, r_st.sem)
        case_ok = diff > 3 * se and s_obj < r_obj
        ok &= case_ok
        lines.append(
            f"{label}: non-rev {s_st.mean:.2f}% (S {s_obj:.2f}) vs rev {r_st.mean:.2f}% (S {r_obj:.2f}), diff {diff:.2f} = {diff / se:.0f} SE"
        )
    _finish(11, "Surveillance ordering", ok, "; ".join(lines), time.perf_counter() - t0, 15 * 60)


@pytest.mark.long
def test_c11_long_arena68():
    """Full-size arena, not gated: target non-reversible objective <= 60."""
    g = surveillance_arena()
    pihat = np.full(g.n_nodes, 1 / g.n_nodes)
    problem = Problem(g, C=ConnectivityWeights.target(pihat), constraint="stationary", target_pi=pihat)
    tr = run_spsa(problem, preset("surveillance_fixed"))
    print(f"arena68 non-reversible objective {tr.objective_final:.2f} after {tr.iterations[-1]} iterations ({tr.reason})")
    assert tr.objective_final <= 60


def test_c12_infeasibility():
    t0 = time.perf_counter()
    rep = infeasibility_demo(K3_UNIFORM, NAIVE_DELTA, eta=0.01)
    naive_out = not rep.naive_in_simplex_set and np.allclose(rep.naive_row_sums, [1.02, 1.0, 1.02], atol=1e-15)
    g = Graph(3, [(i, j) for i in range(3) for j in range(3) if K3_UNIFORM[i, j] > 0])
    problem = Problem(g)
    worst = {"row": 0.0, "min": np.inf, "count": 0}

    def check(x, masks=None):
        P = problem.matrix(x)
        worst["row"] = max(worst["row"], float(np.max(np.abs(P.sum(axis=1) - 1))))
        worst["min"] = min(worst["min"], float(x.min()))
        worst["count"] += 1
        return fast_objective(P, problem.C)

    problem.objective = check
    cfg = SpsaConfig(alpha=1.0, alpha0=100, eta=0.004, epsilon=0.01, eval_interval=1000, max_iterations=10_000, tol=0.0)
    run_spsa(problem, cfg, x0=np.array([0.98, 0.02, 0.02, 0.98, 0.5, 0.5]))
    inside = worst["count"] == 20_000 and worst["row"] < 1e-12 and worst["min"] > 0
    ok = naive_out and inside
    detail = f"naive row sums {rep.naive_row_sums.tolist()}; {worst['count']} evaluation points, min weight {worst['min']:.2e}, row error {worst['row']:.1e}"
    _finish(12, "Infeasibility regression", ok, detail, time.perf_counter() - t0, 60)


def test_c13_determinism(tmp_path):
    t0 = time.perf_counter()
    args = ["optimize", "--graph", "builtin:petersen", "--config", str(tmp_path / "cfg.yaml"), "--seed", "13", "--restarts", "2"]
    (tmp_path / "cfg.yaml").write_text("preset: petersen\nmax_iterations: 4000\neval_interval: 1000\n")
    codes = [cli_main(args + ["--out", str(tmp_path / name)]) for name in ("a", "b")]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in ("trace.csv", "weights.csv", "restarts.csv"))
    ok = codes == [0, 0] and same
    _finish(13, "Determinism", ok, f"exit codes {codes}, traces identical: {same}", time.perf_counter() - t0, 60)
