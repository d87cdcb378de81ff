"""Command-line front end.

Exit status: 0 on success, 2 for bad flags or inputs, 3 for an infeasible
problem, 4 for a numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ConnectivityWeights, analyze, effective_resistance, kemeny_constant, objective_from_analytics
from .errors import ConfigError, GraphError, InfeasibleError, MfptOptError, ReducibleChainError
from .failures import FailureModel, expected_objective_enumerate, failed_mask, sample_edge_sets
from .graph import Graph, is_symmetric_weights, load_graph, transition_matrix, uniform_weights
from .instances import builtin
from .spsa import Problem, SpsaConfig, best_trace, preset, restart_plan, run_spsa
from .surveillance import SimulationSpec, simulate, write_stats_table

log = logging.getLogger("mfptopt")

ENV_PREFIX = "MFPTOPT_"
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
# flag name -> (env suffix, converter)
ENV_FLAGS = {
    "graph": ("GRAPH", str),
    "config": ("CONFIG", str),
    "seed": ("SEED", int),
    "mode": ("MODE", str),
    "constraint": ("CONSTRAINT", str),
    "restarts": ("RESTARTS", int),
    "out": ("OUT", str),
    "threads": ("THREADS", int),
}


class UsageError(MfptOptError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- file formats ------------------------------------------------------------
def resolve_graph(source: str) -> Graph:
    if source is None:
        raise UsageError("--graph is required")
    if source.startswith("builtin:"):
        try:
            return builtin(source.split(":", 1)[1])
        except KeyError as exc:
            raise UsageError(str(exc)) from exc
    return load_graph(source)


def write_weights(path, g: Graph, x) -> None:
    """Edge-indexed weights with the graph digest in the header line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# graph {g.digest()}\n")
        w = csv.writer(fh)
        w.writerow(("edge", "tail", "head", "weight"))
        for k, ((i, j), v) in enumerate(zip(g.edges, x)):
            w.writerow((k, i + 1, j + 1, repr(float(v))))


def read_weights(path, g: Graph) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["#", "graph"] or len(header) != 3:
            raise UsageError(f"{path}: missing '# graph <digest>' header")
        if header[2] != g.digest():
            raise UsageError(f"{path}: weights belong to graph {header[2]}, not {g.digest()}")
        rows = list(csv.DictReader(fh))
    if len(rows) != g.n_edges:
        raise UsageError(f"{path}: expected {g.n_edges} weights, found {len(rows)}")
    x = np.empty(g.n_edges)
    for r in rows:
        k = int(r["edge"])
        if g.edges[k] != (int(r["tail"]) - 1, int(r["head"]) - 1):
            raise UsageError(f"{path}: edge {k} does not match the graph")
        x[k] = float(r["weight"])
    return x


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if p.suffix in (".yaml", ".yml"):
        import yaml

        doc = yaml.safe_load(text) or {}
    else:
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise UsageError("config must be a mapping")
    return doc


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, args, config: dict, inputs: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "arguments": {k: v for k, v in vars(args).items() if k != "func"},
        "config": config,
        "inputs": inputs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _input_hashes(args, g: Graph) -> dict:
    h = {"graph_digest": g.digest()}
    for name in ("graph", "config", "weights", "target_pi", "realizations"):
        v = getattr(args, name, None)
        if v and not str(v).startswith("builtin:") and Path(v).is_file():
            h[f"{name}_sha256"] = _sha256(v)
    return h


def _weights(args, g: Graph) -> np.ndarray:
    return read_weights(args.weights, g) if getattr(args, "weights", None) else uniform_weights(g)


def _connectivity(name: str, n: int, target=None) -> ConnectivityWeights:
    if name == "ones":
        return ConnectivityWeights.ones()
    if name == "kemeny":
        return ConnectivityWeights.kemeny()
    if name == "target":
        return ConnectivityWeights.target(np.full(n, 1.0 / n) if target is None else target)
    raise UsageError(f"unknown objective weights {name!r}")


def _target_pi(args, n: int):
    if getattr(args, "target_pi", None) is None:
        return None
    src = args.target_pi
    try:
        v = np.loadtxt(src, delimiter=",", ndmin=1) if Path(src).is_file() else np.array(src.split(","), dtype=float)
    except ValueError as exc:
        raise UsageError(f"cannot read target distribution: {exc}") from exc
    if v.shape != (n,):
        raise UsageError(f"target distribution needs {n} entries")
    return v


# -- subcommands -------------------------------------------------------------
def cmd_analyze(args) -> int:
    g = resolve_graph(args.graph)
    x = _weights(args, g)
    P = transition_matrix(g, x)
    an = analyze(P)
    print("pi," + ",".join(f"{v:.12g}" for v in an.pi))
    print(f"K={kemeny_constant(P):.12g}")
    print(f"S={objective_from_analytics(an, _connectivity(args.objective, g.n_nodes)):.12g}")
    if is_symmetric_weights(g, x, tol=1e-12) and np.all(g.reciprocal_index()[g.tails != g.heads] >= 0):
        print(f"R_tot={effective_resistance(g, x)[1]:.12g}")
    else:
        print("R_tot=n/a")
    return EXIT_OK


def _spsa_config(args) -> tuple[SpsaConfig, dict]:
    doc = load_config(args.config)
    base = doc.pop("preset", None)
    try:
        cfg = preset(base, **doc) if base else SpsaConfig.from_dict(doc)
    except TypeError as exc:
        raise UsageError(f"bad config: {exc}") from exc
    if args.seed is not None:
        cfg.seed = args.seed
    if args.restarts is not None:
        cfg.restarts = args.restarts
    if args.max_iterations is not None:
        cfg.max_iterations = args.max_iterations
    return cfg, cfg.to_dict()


def _online_source(args, g: Graph, fm: FailureModel, cfg: SpsaConfig):
    if args.realizations:
        table = np.loadtxt(args.realizations, delimiter=",", ndmin=2).astype(bool)
        if table.shape[1] != len(fm.edges):
            raise UsageError(f"realization file needs {len(fm.edges)} columns")
        return lambda k: table[k % len(table)][None, :]
    rng = np.random.default_rng([cfg.seed, 0x0411E])
    return lambda k: sample_edge_sets(fm, 1, rng)


def _run_restart(payload):
    problem, cfg, x0 = payload
    return run_spsa(problem, cfg, x0=x0)


def cmd_optimize(args) -> int:
    g = resolve_graph(args.graph)
    cfg, cfg_doc = _spsa_config(args)
    target = _target_pi(args, g.n_nodes)
    if args.constraint == "symmetric":
        g_opt = g.bidirectional_subgraph()
        dropped = g.n_edges - g_opt.n_edges
        if dropped:
            log.info("symmetric constraint: dropped %d one-way edges", dropped)
    else:
        g_opt = g
    C = _connectivity(args.objective, g.n_nodes, target)
    fm = FailureModel.from_graph(g_opt) if args.mode != "fixed" else None
    if fm is not None and not fm.edges:
        raise UsageError(f"mode {args.mode!r} needs risky edges in the graph")
    source = _online_source(args, g_opt, fm, cfg) if args.mode == "online" else None
    problem = Problem(g_opt, C=C, constraint=args.constraint, target_pi=target, failure=fm, mode=args.mode, realization_source=source)
    cfg.validate(problem.system.dim)
    jobs = [(problem, run_cfg, x0) for run_cfg, x0 in restart_plan(problem, cfg)]
    threads = max(1, args.threads or 1)
    if threads > 1 and len(jobs) > 1 and args.mode != "online":
        with ProcessPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(_run_restart, jobs))
    else:
        traces = [_run_restart(j) for j in jobs]
    for r, tr in enumerate(traces):
        tr.restart = r
    best = best_trace(traces)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    best.write_csv(out / "trace.csv")
    best.write_timing(out / "timing.csv")
    write_weights(out / "weights.csv", g_opt, best.x_final)
    if g_opt is not g:
        (out / "graph.json").write_text(json.dumps(g_opt.to_document(), indent=1) + "\n")
    with open(out / "restarts.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("restart", "seed", "iterations", "objective", "reason"))
        for tr in traces:
            w.writerow((tr.restart, tr.seed, tr.iterations[-1] if tr.iterations else 0, repr(tr.objective_final), tr.reason))
    write_manifest(out, "optimize", args, cfg_doc, _input_hashes(args, g))
    print(f"best restart {best.restart}: objective {best.objective_final:.6f} ({best.reason})")
    return EXIT_OK


def cmd_project(args) -> int:
    g = resolve_graph(args.graph)
    x = _weights(args, g)
    if args.constraint == "symmetric":
        g = g.bidirectional_subgraph()
        if x.size != g.n_edges:
            raise UsageError("symmetric projection needs weights on the bidirectional subgraph")
    problem = Problem(g, constraint=args.constraint, target_pi=_target_pi(args, g.n_nodes))
    y, ok = problem.project(x, args.epsilon)
    if not ok:
        raise InfeasibleError("projection did not converge; the constraint set may be empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_weights(out / "projected.csv", g, y)
    write_manifest(out, "project", args, {}, _input_hashes(args, g))
    print(f"distance {np.linalg.norm(y - x):.12g} residual {problem.residual(y, args.epsilon):.3g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    g = resolve_graph(args.graph)
    x = _weights(args, g)
    spec = SimulationSpec(
        intruder_count=args.intruders,
        residence_window=args.tau,
        replications=args.replications,
        seed=args.seed if args.seed is not None else 0,
        random_support=args.mode == "random",
        include_arrival=not args.exclude_arrival,
        persist_agent=not args.reset_agent,
    )
    fm = FailureModel.from_graph(g) if spec.random_support else None
    stats = simulate(x, spec, g, fm)
    C = _connectivity(args.objective, g.n_nodes)
    if fm is not None:
        obj = expected_objective_enumerate(g, x, C, fm)
    else:
        obj = objective_from_analytics(analyze(transition_matrix(g, x)), C)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_stats_table(out / "capture.csv", [(args.label, stats, obj)])
    np.savetxt(out / "capture_per_replication.csv", stats.percentages, fmt="%.4f", header="capture_percent", comments="")
    write_manifest(out, "simulate", args, dataclasses.asdict(spec), _input_hashes(args, g))
    print(f"{args.label}: min {stats.min:.2f} mean {stats.mean:.2f} max {stats.max:.2f} sd {stats.std:.2f} objective {obj:.6g}")
    return EXIT_OK


def cmd_expected(args) -> int:
    g = resolve_graph(args.graph)
    x = _weights(args, g)
    fm = FailureModel.from_graph(g)
    C = _connectivity(args.objective, g.n_nodes)
    try:
        value = expected_objective_enumerate(g, x, C, fm)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"E[S]={value:.12g} over {2 ** fm.n_units} realizations")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    failures = 0
    for name, ok, detail in run_all(seed=args.seed if args.seed is not None else 0):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += not ok
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


# -- parser ------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--graph", help="graph file (JSON/YAML) or builtin:NAME")
    common.add_argument("--config", help="SPSA config file (JSON/YAML)")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=("fixed", "random", "online"), default="fixed")
    common.add_argument("--constraint", choices=("simplex", "stationary", "symmetric"), default="simplex")
    common.add_argument("--restarts", type=int)
    common.add_argument("--out", default="out")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--objective", choices=("ones", "kemeny", "target"), default="ones")
    common.add_argument("--weights", help="weights file written by this tool")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mfptopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="print pi, K, S and R_tot")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("optimize", parents=[common], help="run constrained SPSA")
    p.add_argument("--target-pi", help="target stationary law: comma-separated values or a file")
    p.add_argument("--realizations", help="0/1 table of surviving risky edges for online mode")
    p.add_argument("--max-iterations", type=int)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("project", parents=[common], help="project weights onto a constraint set")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--target-pi", help="target stationary law: comma-separated values or a file")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("simulate", parents=[common], help="surveillance capture simulation")
    p.add_argument("--intruders", type=int, default=500)
    p.add_argument("--tau", type=int, default=45)
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--label", default="policy")
    p.add_argument("--exclude-arrival", action="store_true")
    p.add_argument("--reset-agent", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("expected", parents=[common], help="exact expected objective under edge failures")
    p.set_defaults(func=cmd_expected)

    p = sub.add_parser("verify", parents=[common], help="run the oracle suites")
    p.set_defaults(func=cmd_verify)
    return parser


def _apply_env(args, argv: list[str], environ) -> None:
    """Environment variables fill flags not given on the command line."""
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    for name, (suffix, conv) in ENV_FLAGS.items():
        key = ENV_PREFIX + suffix
        if f"--{name}" in given or key not in environ:
            continue
        try:
            setattr(args, name, conv(environ[key]))
        except ValueError as exc:
            raise UsageError(f"{key}: {exc}") from exc
    if getattr(args, "mode", "fixed") not in ("fixed", "random", "online"):
        raise UsageError(f"invalid mode {args.mode!r}")
    if getattr(args, "constraint", "simplex") not in ("simplex", "stationary", "symmetric"):
        raise UsageError(f"invalid constraint {args.constraint!r}")


def main(argv: list[str] | None = None, environ=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    environ = os.environ if environ is None else environ
    try:
        args = build_parser().parse_args(argv)
        _apply_env(args, argv, environ)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except (UsageError, ConfigError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ReducibleChainError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
