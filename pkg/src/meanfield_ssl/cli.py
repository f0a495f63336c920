"""Command line entry point: ``meanfield-ssl {run,tune,graph,plot,version}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .datasets import GENERATORS, load_csv
from .exceptions import ConfigError, NoRootError
from .experiment import CONFIG_SCHEMA, WORKERS_ENV, load_config, parse_grid, read_csv, run_experiment, write_outputs
from .graph import build_similarity, default_k, export_edgelist
from .tuning import resolve_gamma, solve_beta

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _schema_text() -> str:
    lines = ["config keys (flat TOML):"]
    for key, (kind, default, help_) in CONFIG_SCHEMA.items():
        lines.append(f"  {key:<14} {kind:<16} default={default!r}  {help_}")
    return "\n".join(lines)


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.set or ())
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.validate()
    rows = run_experiment(cfg)
    paths = write_outputs(cfg, rows)
    failed = sum(1 for r in rows if r.error)
    print(f"wrote {len(rows)} rows to {paths['results']}" + (f" ({failed} failed runs)" if failed else ""))
    for p in paths.get("plots", []):
        print(f"plot: {p}")
    return EXIT_OK


def _cmd_tune(args) -> int:
    rates = parse_grid(args.r_l)
    print("q,gamma_spec,gamma,r_l,beta_star,residual,iterations,method")
    status = EXIT_OK
    for q in args.q:
        for spec in args.gamma:
            try:
                gamma = resolve_gamma(spec, q)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            for r_l in rates:
                try:
                    sol = solve_beta(gamma, r_l, q, tol=args.tol)
                except NoRootError as exc:
                    print(f"{q},{spec},{gamma!r},{r_l!r},,,,no-root: {exc}")
                    status = EXIT_FAILURE
                    continue
                print(f"{q},{spec},{gamma!r},{r_l!r},{sol.beta_star:.17g},{sol.residual:.3g},"
                      f"{sol.iterations},{sol.method}")
    return status


def _cmd_graph(args) -> int:
    if args.csv:
        ds = load_csv(args.csv, args.label_column)
    else:
        gen = GENERATORS[args.dataset]
        if args.dataset == "two_moons":
            ds = gen(args.count, args.noise, args.seed)
        else:
            ds = gen(args.count, args.seed)
    k = args.k if args.k is not None else default_k(ds.n_samples)
    g = build_similarity(ds, k)
    export_edgelist(g, args.out)
    print(f"N={g.n_nodes} k={k} sigma={g.sigma:.6g} edges={g.n_edges} isolated={g.isolated.size} -> {args.out}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plotting import emit_plots

    paths = emit_plots(read_csv(args.csv), args.out)
    for p in paths:
        print(f"plot: {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanfield-ssl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment sweep from a config file",
                       epilog=_schema_text() + f"\n\n${WORKERS_ENV} sets the worker budget when "
                       "'workers' is 0.", formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config", nargs="?", help="TOML config (omit to use defaults)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("tune", help="print the tuned beta table")
    p.add_argument("--q", type=int, nargs="+", default=[2, 3, 5, 10])
    p.add_argument("--gamma", nargs="+", default=["mid", "full"], help="'mid', 'full' or numbers in (0, 1]")
    p.add_argument("--r-l", nargs="+", default=["[0.02:0.2:0.02]"], help="values or grids, e.g. [0.02:0.2:0.02] 0.3")
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("graph", help="export a similarity graph as an edge list")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", choices=sorted(GENERATORS), default="two_moons")
    src.add_argument("--csv", help="CSV dataset instead of a generator")
    p.add_argument("--label-column", default="label")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("plot", help="render SVG plots from a results CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--out", type=Path, default=Path("plots"))
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=lambda args: print(__version__) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
