"""Command-line entry point.

Exit status: 0 on success, 2 on invalid parameters, 3 on file errors.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
import warnings

import numpy as np

from . import harness, limits
from .bp import BpConfig, run_bp, select_top_k
from .exact import DEFAULT_DELTA, bp_plus_cleanup
from .exceptions import DomainError, GraphFormatError
from .model import CommunityMode, ModelParams, generate, load_graph, save_graph
from .spectral import DEFAULT_ALPHA, run_spectral
from .tree import estimate_moments_mc

THREADS_ENV = "HIDDEN_COMMUNITY_THREADS"
EXIT_DOMAIN = 2
EXIT_IO = 3


def _threads(args) -> int:
    if args.threads is not None:
        value = args.threads
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            value = int(raw)
        except ValueError:
            raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise DomainError("thread count must be >= 1")
    return value


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write_csv(path, header, rows):
    with _output(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(harness._fmt(v) for v in row) + "\n")


def _report(estimate, labels):
    if labels is not None:
        m = harness.metrics(estimate, labels)
        print(
            f"sym_diff={m.symmetric_difference} normalized_error={m.normalized_error:.6g} exact={m.exact}",
            file=sys.stderr,
        )


def _load(args):
    graph, labels = load_graph(args.graph, args.labels)
    params = ModelParams(n=graph.n, K=args.k, p=args.p, q=args.q)
    return graph, labels, params


def _membership_rows(values, community):
    member = np.zeros(values.size, dtype=np.int64)
    member[community] = 1
    return zip(range(values.size), values.tolist(), member.tolist())


def cmd_generate(args):
    if args.out is None:
        raise DomainError("generate needs --out")
    params = ModelParams(n=args.n, K=args.k, p=args.p, q=args.q, community_mode=CommunityMode(args.mode))
    graph, labels = generate(params, seed=args.seed)
    save_graph(graph, labels, args.out)
    print(f"n={graph.n} edges={graph.n_edges} community={labels.size}", file=sys.stderr)


def cmd_run_bp(args):
    graph, labels, params = _load(args)
    config = BpConfig(t_f=args.tf, tbar0=args.tbar0)
    res = run_bp(graph, params, config)
    community = select_top_k(res.values, params.k_int)
    _write_csv(args.out, ["vertex", "belief", "label"], _membership_rows(res.values, community))
    _report(community, labels)


def cmd_run_spectral(args):
    graph, labels, params = _load(args)
    res = run_spectral(graph, params, args.alpha, args.iters)
    _write_csv(args.out, ["vertex", "belief", "label"], _membership_rows(res.values, res.community))
    _report(res.community, labels)


def cmd_run_exact(args):
    graph, labels, params = _load(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        res = bp_plus_cleanup(graph, params, args.delta, BpConfig(t_f=args.tf, tbar0=args.tbar0), args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _write_csv(args.out, ["vertex", "votes", "label"], _membership_rows(res.votes, res.community))
    _report(res.community, labels)


def cmd_tree(args):
    params = ModelParams(n=args.n, K=args.k, p=args.p, q=args.q)
    ms = estimate_moments_mc(params, args.depth, args.trials, args.seed)
    header = ["t", "a_hat", "a_se", "b_hat", "b_se", "rho_hat", "rho_se", "pe_hat", "pe0_hat", "pe1_hat"]
    rows = zip(ms.t.tolist(), ms.a_hat, ms.a_se, ms.b_hat, ms.b_se, ms.rho_hat, ms.rho_se, ms.pe_hat, ms.pe0_hat, ms.pe1_hat)
    _write_csv(args.out, header, rows)
    if ms.discarded:
        print(f"discarded {ms.discarded} trees over the node cap", file=sys.stderr)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise DomainError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_sweep(args):
    spec = harness.SweepSpec(
        algorithm=args.algorithm,
        lambdas=tuple(_float_list(args.lambdas)),
        n=args.n,
        K=args.k,
        ratio=args.ratio,
        trials=args.trials,
        seed=args.seed,
        community_mode=CommunityMode(args.mode),
        n_iter=args.iters,
        alpha=args.alpha,
        delta=args.delta,
    )
    result = harness.sweep(spec, threads=_threads(args))
    if args.out is None or args.out == "-":
        harness.write_sweep(result, "/dev/stdout")
    else:
        harness.write_sweep(result, args.out, args.out + ".summary.csv")
    for s in result.summary:
        line = f"lambda={s.lam:g} trials={s.trials} mean_error={s.mean_error:.4g} se={s.se_error:.3g}"
        print(line + (f" skipped: {s.skipped}" if s.skipped else ""), file=sys.stderr)


def cmd_coupling(args):
    params = ModelParams(n=args.n, K=args.k, p=args.p, q=args.q)
    res = harness.coupling_check(params, args.t, args.vertices, args.trees, args.seed)
    rows = [(lab, args.t, res.ks[lab], res.pvalue[lab], res.graph_samples[lab], res.tree_samples[lab]) for lab in (0, 1)]
    _write_csv(args.out, ["label", "t", "ks", "pvalue", "graph_samples", "tree_samples"], rows)
    for note in res.warnings:
        print(f"warning: {note}", file=sys.stderr)


def cmd_phase(args):
    rows = limits.phase_grid(args.c, limits.parse_range(args.b_range), limits.parse_range(args.rho_range))
    _write_csv(args.out, ["b", "rho", "region", "lambda", "exact_ratio"], rows)


def _positive_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # repeated on each subcommand so they may appear on either side of it
    common.add_argument("--seed", type=_positive_int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path, '-' for stdout")

    parser = argparse.ArgumentParser(prog="hidden-community", description="Hidden community recovery experiments.")
    parser.add_argument("--seed", type=_positive_int, default=0)
    parser.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    parser.add_argument("--out", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p, need_n=True):
        if need_n:
            p.add_argument("--n", type=int, required=True)
        p.add_argument("--k", type=float, required=True)
        p.add_argument("--p", type=float, required=True)
        p.add_argument("--q", type=float, required=True)

    def graph_args(p):
        p.add_argument("--graph", required=True)
        p.add_argument("--labels", default=None, help="labels file (default <graph>.labels if present)")
        model_args(p, need_n=False)

    p = sub.add_parser("generate", parents=[common], help="sample a planted graph")
    model_args(p)
    p.add_argument("--mode", choices=[m.value for m in CommunityMode], default="fixed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run-bp", parents=[common], help="belief propagation beliefs and top-K estimate")
    graph_args(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--tf", type=int, default=None)
    group.add_argument("--tbar0", type=int, default=10)
    p.set_defaults(func=cmd_run_bp)

    p = sub.add_parser("run-spectral", parents=[common], help="non-backtracking spectral message passing")
    graph_args(p)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--iters", type=int, default=None, help="override the iteration count")
    p.set_defaults(func=cmd_run_spectral)

    p = sub.add_parser("run-exact", parents=[common], help="belief propagation plus voting cleanup")
    graph_args(p)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--tbar0", type=int, default=10)
    p.add_argument("--tf", type=int, default=None)
    p.set_defaults(func=cmd_run_exact)

    p = sub.add_parser("tree", parents=[common], help="Monte Carlo moments on the Poisson tree")
    model_args(p)
    p.add_argument("--depth", type=_positive_int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("sweep", parents=[common], help="error versus lambda at fixed n, K, p/q")
    p.add_argument("--algorithm", choices=harness.ALGORITHMS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--ratio", type=float, required=True, help="p/q")
    p.add_argument("--lambdas", required=True, help="comma-separated lambda values")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--mode", choices=[m.value for m in CommunityMode], default="fixed")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("coupling", parents=[common], help="KS distance between graph and tree beliefs")
    model_args(p)
    p.add_argument("--t", type=_positive_int, required=True)
    p.add_argument("--vertices", type=int, default=2000)
    p.add_argument("--trees", type=int, default=2000)
    p.set_defaults(func=cmd_coupling)

    p = sub.add_parser("phase", parents=[common], help="classify a (b, rho) grid into regions I-IV")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--b-range", required=True, help="start:stop:step")
    p.add_argument("--rho-range", required=True, help="start:stop:step")
    p.set_defaults(func=cmd_phase)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _threads(args)
        args.func(args)
    except (DomainError, ValueError) as exc:
        if isinstance(exc, GraphFormatError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
