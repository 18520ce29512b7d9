"""Command-line entry point ``vrjplab``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import experiments as ex
from .betafield import sample_beta
from .electrical import effective_conductance, effective_weight
from .graphs import GraphError, WeightedGraph, parse_lattice_spec, read_edge_list
from .linalg import invert_pd_batch
from .processes import beta_walk_paths, errw_paths, errw_via_vrjp_paths, vrjp_paths
from .stats import TestReport, jsonable, estimate, fmt_float, replicate_map

MODELS = ("errw", "vrjp", "errw-via-vrjp", "rwrc")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _graph(args) -> WeightedGraph:
    if args.graph and args.lattice:
        raise GraphError("give either --graph or --lattice, not both")
    if args.graph:
        return read_edge_list(args.graph)
    if args.lattice:
        return parse_lattice_spec(args.lattice)
    raise GraphError("a graph is required: --graph <path> or --lattice d,L,w")


class Writer:
    """Rows as CSV (header from the first row) or one JSON object per line."""

    def __init__(self, stream, fmt: str):
        self.stream, self.fmt = stream, fmt
        self._csv = None

    def row(self, record: dict):
        if self.fmt == "jsonl":
            self.stream.write(json.dumps(jsonable(record)) + "\n")
            return
        flat = {}
        for k, v in record.items():
            if isinstance(v, (list, tuple, np.ndarray)):
                flat.update({f"{k}_{i}": x for i, x in enumerate(v)})
            else:
                flat[k] = v
        if self._csv is None:
            self._csv = csv.DictWriter(self.stream, fieldnames=list(flat), lineterminator="\n")
            self._csv.writeheader()
        self._csv.writerow({k: fmt_float(v) if isinstance(v, (float, np.floating)) else v
                            for k, v in flat.items()})

    def report(self, r: TestReport):
        if self.fmt == "jsonl":
            self.stream.write(r.to_json() + "\n")
        else:
            self.row({"name": r.name, "statistic": float(r.statistic), "threshold": float(r.threshold),
                      "passed": r.passed, "seed": r.seed})


@contextmanager
def _output(args) -> Iterator[Writer]:
    if args.out and args.out != "-":
        with open(args.out, "w", newline="") as fh:
            yield Writer(fh, args.format)
    else:
        yield Writer(sys.stdout, args.format)


def _reports(args, reports: Iterable[TestReport]) -> int:
    ok = True
    with _output(args) as out:
        for r in reports:
            out.report(r)
            ok &= r.passed
    return 0 if ok else 1


# --------------------------------------------------------------------------


def cmd_sample_beta(args) -> int:
    g = _graph(args)
    w = g.weight_matrix()
    if args.eta == "zero":
        eta = np.zeros(g.n_vertices)
    else:
        eta = np.asarray(_floats(args.eta))
        if eta.shape != (g.n_vertices,):
            raise ex.ConfigError(f"--eta needs {g.n_vertices} values or 'zero'")

    def draw(rng, m):
        s = sample_beta(w, eta, rng, size=m)
        return s.beta, np.exp(s.log_det())

    parts = replicate_map(draw, args.n, args.seed, "cli-sample-beta", args.threads)
    with _output(args) as out:
        rep = 0
        for beta, det in parts:
            for b, d in zip(beta, det):
                out.row({"replicate": rep, "beta": b.tolist(), "det_h": float(d)})
                rep += 1
    return 0


def cmd_simulate(args) -> int:
    g = _graph(args)
    a = None if args.a is None else args.a

    def draw(rng, m):
        if args.model == "errw":
            return errw_paths(g, a, args.start, args.steps, m, rng), None
        if args.model == "errw-via-vrjp":
            return errw_via_vrjp_paths(g, a, args.start, args.steps, m, rng), None
        if args.model == "rwrc":
            return beta_walk_paths(g, args.start, args.steps, m, rng), None
        paths, times, _ = vrjp_paths(g, None, args.start, args.steps, m, rng)
        return paths, times

    parts = replicate_map(draw, args.n, args.seed, f"cli-simulate-{args.model}", args.threads)
    with _output(args) as out:
        rep = 0
        for paths, times in parts:
            for j in range(len(paths)):
                for step, v in enumerate(paths[j]):
                    t = float(step) if times is None else (0.0 if step == 0 else float(times[j, step - 1]))
                    out.row({"replicate": rep, "step": step, "vertex": int(v), "time": t})
                rep += 1
    return 0


def cmd_couple_check(args) -> int:
    g = _graph(args)
    setup = ex.coupling_setup(g, args.wminus, args.wplus, args.x1)
    reports = [
        ex.triple_identity_experiment(setup, min(args.n, args.identity_n), args.seed, args.threads),
        ex.coupled_marginal_experiment(setup, args.n, args.seed, args.threads),
    ]
    return _reports(args, reports)


def cmd_eff(args) -> int:
    g = _graph(args)
    c_eff = effective_conductance(g, None, args.x0, args.delta)
    record = {"x0": args.x0, "delta": args.delta, "c_eff": c_eff}
    if args.beta_samples:
        w = g.weight_matrix()
        vals = np.concatenate(replicate_map(
            lambda rng, m: effective_weight(invert_pd_batch(sample_beta(w, None, rng, size=m).h()),
                                            args.x0, args.delta),
            args.beta_samples, args.seed, "cli-eff", args.threads))
        est = estimate(vals)
        record.update(mean_w_eff=est.mean, stderr=est.stderr, n=est.n)
    with _output(args) as out:
        out.row(record)
    return 0


def cmd_convex_order(args) -> int:
    g = _graph(args)
    x = np.zeros(g.n_vertices)
    if args.x is None:
        x[-1] = 1.0
    else:
        x = np.asarray(args.x)
    rep = ex.convex_order_experiment(g, args.wminus, args.wplus, args.i, x, args.n, args.seed,
                                     args.threads)
    return _reports(args, [rep])


def cmd_scan(args) -> int:
    rows, rep = ex.monotonicity_scan(args.d, args.side, args.weights, args.x0, args.n, args.seed,
                                     args.threads, args.radius)
    with _output(args) as out:
        for w, m, mean, se in rows:
            out.row({"w": w, "m": m, "mean": mean, "stderr": se})
    sys.stderr.write(rep.line() + "\n")
    return 0 if rep.passed else 1


def cmd_suite(args) -> int:
    config = ex.load_suite_config(args.config) if args.config else ex.default_suite_config(args.seed)
    with _output(args) as out:
        agg = ex.run_suite(config, args.threads, on_report=out.report)
        out.report(agg)
    return 0 if agg.passed else 1


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "jsonl"), default=None)

    graph = argparse.ArgumentParser(add_help=False)
    graph.add_argument("--graph", help="edge list file, one 'u v w' per line")
    graph.add_argument("--lattice", help="lattice box 'd,L,w'")

    p = argparse.ArgumentParser(prog="vrjplab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample-beta", parents=[common, graph], help="exact beta-field draws")
    s.add_argument("--eta", default="zero", help="'zero' or comma-separated values")
    s.add_argument("--n", type=int, default=1)
    s.set_defaults(func=cmd_sample_beta, default_format="csv")

    s = sub.add_parser("simulate", parents=[common, graph], help="trajectories")
    s.add_argument("--model", choices=MODELS, required=True)
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--steps", type=int, default=10)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--a", type=float, default=None,
                   help="ERRW initial weight on every edge (default: the graph weights)")
    s.set_defaults(func=cmd_simulate, default_format="csv")

    s = sub.add_parser("couple-check", parents=[common, graph],
                       help="identity and marginal checks of the coupling; the modified edge joins the last two vertices")
    s.add_argument("--wminus", type=float, required=True)
    s.add_argument("--wplus", type=float, required=True)
    s.add_argument("--x1", type=_floats, default=None)
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--identity-n", type=int, default=10_000, help="cap on triples for the identity check")
    s.set_defaults(func=cmd_couple_check, default_format="jsonl")

    s = sub.add_parser("eff", parents=[common, graph], help="effective conductance and E[w_eff]")
    s.add_argument("--x0", type=int, required=True)
    s.add_argument("--delta", type=int, required=True)
    s.add_argument("--beta-samples", type=int, default=0)
    s.set_defaults(func=cmd_eff, default_format="csv")

    s = sub.add_parser("convex-order", parents=[common, graph], help="convex-order comparison")
    s.add_argument("--wminus", type=float, required=True)
    s.add_argument("--wplus", type=float, required=True)
    s.add_argument("--i", type=int, default=0)
    s.add_argument("--x", type=_floats, default=None, help="weights x_j (default: indicator of the last vertex)")
    s.add_argument("--n", type=int, default=10_000)
    s.set_defaults(func=cmd_convex_order, default_format="jsonl")

    s = sub.add_parser("scan", parents=[common], help="monotonicity of E f_m(psi) in the weight")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--side", type=int, default=3)
    s.add_argument("--weights", type=_floats, default=[0.5, 1.0, 2.0, 4.0])
    s.add_argument("--x0", type=int, default=None, help="default: the middle vertex")
    s.add_argument("--radius", type=int, default=2)
    s.add_argument("--n", type=int, default=10_000)
    s.set_defaults(func=cmd_scan, default_format="csv")

    s = sub.add_parser("suite", parents=[common], help="run the verification suite")
    s.add_argument("--config", help="JSON suite file (default: the built-in suite)")
    s.set_defaults(func=cmd_suite, default_format="jsonl")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    for name in ("n", "beta_samples"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < (0 if name == "beta_samples" else 1):
            parser.error(f"--{name.replace('_', '-')} must be positive")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (GraphError, ex.ConfigError, ValueError) as exc:
        sys.stderr.write(f"vrjplab: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
