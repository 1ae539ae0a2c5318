"""Command-line entry point: ``synthquery <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import accountant as acct
from .core import QueryKind
from .data import BiasVector, FeatureMap, SchemaSpec, generate_synthetic, ingest_csv, read_database, write_database
from .driver import (
    RunConfig,
    baseline_laplace,
    baseline_uniform,
    baseline_zeros,
    error_report,
    results_dict,
    run_release,
    sweep,
    sweep_means,
)
from .queries import WorkloadSpec, evaluate_all, format_queries, generate_workload, load_workload
from .solver import FREE_POLICIES, SolverConfig
from .weights import top_k

log = logging.getLogger("synthquery")

RUN_EPILOG = """\
parameter heuristics:
  sparse data (most attributes 0): a larger step size, eta about 1.5 to 2.0,
  with s close to d samples per round.
  dense data (e.g. bias-model synthetic data): eta about 0.4 and
  --free-policy random, so attributes no sampled query mentions are not
  forced to 0.
  Larger s makes each round's best response closer to exact but spends more
  privacy per round; budget mode trades s against the number of rounds T.
"""


class CliError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("expected a comma-separated list of positive numbers")
    return vals


def _writable(path: Path, force: bool) -> Path:
    if path.exists() and not force:
        raise CliError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sibling(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}.{tag}.json")


# ----------------------------------------------------------------------------
# subcommands


def cmd_synth_data(args) -> int:
    out = Path(args.out)
    bias_path = _sibling(out, "bias")
    _writable(out, args.force)
    _writable(bias_path, args.force)
    db, bias = generate_synthetic(args.d, args.n, args.seed)
    write_database(db, out)
    bias.save(bias_path)
    log.info("wrote %d x %d database to %s", db.n, db.d, out)
    return 0


def cmd_ingest(args) -> int:
    schema = SchemaSpec.load(args.schema)
    db, fmap = ingest_csv(args.csv, schema)
    out = Path(args.out)
    fmap_path = _sibling(out, "features")
    _writable(out, args.force)
    _writable(fmap_path, args.force)
    write_database(db, out)
    fmap.save(fmap_path)
    print(json.dumps({"n": db.n, "d": db.d, "database": str(out), "featureMap": str(fmap_path)}))
    return 0


def cmd_gen_queries(args) -> int:
    if (args.db is None) == (args.d is None):
        raise CliError("give exactly one of --db and --d")
    d = read_database(args.db).d if args.db else args.d
    fmap = FeatureMap.load(args.feature_map) if args.feature_map else None
    kind = QueryKind.MARGINAL if args.kind == "marginal" else QueryKind.PARITY
    spec = WorkloadSpec(kind, args.count, seed=args.seed, sensible=args.sensible)
    queries = generate_workload(spec, d, fmap)
    _emit(format_queries(queries), args.out)
    return 0


def _solver_config(args) -> SolverConfig:
    bias = BiasVector.load(args.bias).p if args.bias else None
    return SolverConfig(mode=args.solver, exact_dim_limit=args.exact_dim_limit, timeout=args.timeout,
                        restarts=args.restarts, max_flips=args.max_flips, noise=args.noise,
                        free_policy=args.free_policy, bias=bias, seed=args.seed, threads=args.threads)


def _run_config(args) -> RunConfig:
    return RunConfig(mode=args.mode, alpha=args.alpha, beta=args.beta, T=args.T, s=args.s,
                     eta=args.eta, epsilon=args.epsilon, delta=args.delta,
                     accountant=args.accountant, max_T=args.max_T, solver=_solver_config(args),
                     seed=args.seed, positive_only=not args.all_queries)


def _load_problem(args):
    db = read_database(args.db)
    qclass = evaluate_all(load_workload(args.queries), db, threads=args.threads)
    return db, qclass


def cmd_run(args) -> int:
    config = _run_config(args)
    db, qclass = _load_problem(args)
    T, s, eta = config.schedule(len(qclass), db.d, db.n)
    print(f"T={T} s={s} eta={eta}", flush=True)

    hook = None
    dump = None
    if args.weights_dump:
        dump = open(args.weights_dump, "w")

        def hook(t, state):
            dump.write(json.dumps({"t": t, "top": top_k(state, qclass, args.top_k)}) + "\n")
    try:
        synth, trace = run_release(db, qclass, config, state_hook=hook)
    finally:
        if dump is not None:
            dump.close()
    if args.out_synth:
        write_database(synth, args.out_synth, db.names())
    report = error_report(qclass, db, synth, config.positive_only)
    out = results_dict(db, qclass, config, trace, report)
    _emit(_json(out), args.out_json or args.out)
    return 0


def cmd_eval(args) -> int:
    if args.synth is None and not args.sweep:
        raise CliError("eval needs --synth, --sweep, or both")
    db, qclass = _load_problem(args)
    positive_only = not args.all_queries
    out: dict = {"n": db.n, "d": db.d, "numQueries": len(qclass), "seed": args.seed}
    if args.synth:
        synth = read_database(args.synth)
        out["synthetic"] = error_report(qclass, db, synth, positive_only).to_dict()
    baselines = {}
    for name in args.baselines:
        if name == "zeros":
            rep = baseline_zeros(db.d, qclass, db, positive_only)
        elif name == "uniform":
            rep = baseline_uniform(qclass, db, positive_only)
        else:
            rep = baseline_laplace(qclass, db, args.epsilon, args.delta, args.seed, positive_only)
        baselines[name] = rep.to_dict()
    out["baselines"] = baselines
    if args.sweep:
        if args.s is None or args.eta is None:
            raise CliError("--sweep needs --s and --eta")
        base = RunConfig(mode="budget", s=args.s, eta=args.eta, epsilon=1.0, delta=args.delta,
                         accountant=args.accountant, max_T=args.max_T,
                         solver=_solver_config(args), positive_only=positive_only)
        seeds = [args.seed + i for i in range(args.sweep_seeds)]
        rows = sweep(db, qclass, args.sweep, base, seeds)
        means = sweep_means(rows)
        out["sweep"] = rows
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epsilon", "avg_error", "max_error"])
        for r in means:
            writer.writerow([repr(r["epsilon"]), repr(r["avg_error"]), repr(r["max_error"])])
        if args.sweep_csv:
            Path(args.sweep_csv).write_text(buf.getvalue())
        else:
            out["sweepCsv"] = buf.getvalue()
    _emit(_json(out), args.out)
    return 0


def cmd_accountant(args) -> int:
    if args.invert:
        missing = [f for f in ("epsilon", "eta", "s", "n") if getattr(args, f) is None]
        if missing:
            raise CliError("--invert needs " + ", ".join("--" + m for m in missing))
        T = acct.max_rounds(args.epsilon, args.delta, args.eta, args.s, args.n,
                            args.accountant, ceiling=args.max_T)
        rep = acct.report(acct.RunParams(T, args.s, args.eta, args.n), args.delta).to_dict()
        rep["T"] = T
        rep["accountant"] = args.accountant
    else:
        missing = [f for f in ("T", "eta", "s", "n") if getattr(args, f) is None]
        if missing:
            raise CliError("need " + ", ".join("--" + m for m in missing))
        rep = acct.report(acct.RunParams(args.T, args.s, args.eta, args.n), args.delta).to_dict()
    _emit(_json(rep), args.out)
    return 0


# ----------------------------------------------------------------------------
# parser


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("best-response solver")
    g.add_argument("--solver", choices=("local", "exact"), default="local")
    g.add_argument("--exact-dim-limit", type=_positive_int, default=24)
    g.add_argument("--timeout", type=_positive_float, default=20.0, help="seconds per round")
    g.add_argument("--restarts", type=_positive_int, default=10)
    g.add_argument("--max-flips", type=_positive_int, default=None)
    g.add_argument("--noise", type=float, default=0.3)
    g.add_argument("--free-policy", choices=FREE_POLICIES, default="zeros",
                   help="value of attributes no sampled query mentions")
    g.add_argument("--bias", help="bias JSON for --free-policy bias")


def _add_budget_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--accountant", choices=acct.ACCOUNTANTS, default="hetero")
    p.add_argument("--max-T", type=_positive_int, default=int(acct.DEFAULT_MAX_T))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker threads; results do not depend on this")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--json-errors", action="store_true", help="report errors as JSON on stderr")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="synthquery", description=__doc__,
                                     epilog="--seed, --threads, --out and --json-errors go after the subcommand.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", parents=[common], help="bias-model synthetic database")
    p.add_argument("--d", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth_data, out_required=True)

    p = sub.add_parser("ingest", parents=[common], help="binarize a CSV with a JSON schema")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_ingest, out_required=True)

    p = sub.add_parser("gen-queries", parents=[common], help="sample a query workload")
    p.add_argument("--db")
    p.add_argument("--d", type=_positive_int)
    p.add_argument("--kind", choices=("marginal", "parity"), default="marginal")
    p.add_argument("--count", type=_positive_int, required=True)
    p.add_argument("--sensible", action="store_true",
                   help="no two attributes of a query from the same original column")
    p.add_argument("--feature-map", help="feature map JSON written by ingest")
    p.set_defaults(func=cmd_gen_queries)

    p = sub.add_parser("run", parents=[common], help="release a synthetic database",
                       epilog=RUN_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--mode", choices=("theory", "manual", "budget"), default="manual")
    p.add_argument("--alpha", type=float, help="theory mode: target accuracy")
    p.add_argument("--beta", type=float, help="theory mode: failure probability")
    p.add_argument("--T", type=_positive_int, help="manual mode: rounds")
    p.add_argument("--s", type=_positive_int, help="queries sampled per round")
    p.add_argument("--eta", type=_positive_float, help="step size")
    p.add_argument("--epsilon", type=_positive_float, help="budget mode: privacy budget")
    _add_budget_flags(p)
    p.add_argument("--all-queries", action="store_true",
                   help="report error over negations too, not only positive queries")
    p.add_argument("--out-synth", help="synthetic database CSV")
    p.add_argument("--out-json", help="results JSON (default: --out or stdout)")
    p.add_argument("--weights-dump", help="JSON lines of the heaviest queries per round")
    p.add_argument("--top-k", type=_positive_int, default=10)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", parents=[common], help="errors of a synthetic database and baselines",
                       epilog=RUN_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--db", required=True)
    p.add_argument("--synth")
    p.add_argument("--queries", required=True)
    p.add_argument("--baselines", type=lambda t: [b for b in t.split(",") if b], default=[])
    p.add_argument("--epsilon", type=_positive_float, default=1.0, help="Laplace baseline budget")
    p.add_argument("--all-queries", action="store_true")
    p.add_argument("--sweep", type=_float_list, help="comma-separated epsilons for budget-mode runs")
    p.add_argument("--sweep-seeds", type=_positive_int, default=1)
    p.add_argument("--sweep-csv", help="mean errors per epsilon (default: embedded in the JSON)")
    p.add_argument("--s", type=_positive_int)
    p.add_argument("--eta", type=_positive_float)
    _add_budget_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("accountant", parents=[common], help="privacy cost of a run, or its inverse")
    p.add_argument("--T", type=_positive_int)
    p.add_argument("--s", type=_positive_int)
    p.add_argument("--eta", type=_positive_float)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--epsilon", type=_positive_float)
    p.add_argument("--invert", action="store_true", help="largest T whose cost fits --epsilon")
    _add_budget_flags(p)
    p.set_defaults(func=cmd_accountant)
    return parser


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if getattr(args, "out_required", False) and not args.out:
        parser.error(f"{args.command} requires --out")
    if hasattr(args, "delta") and not 0 < args.delta < 1:
        parser.error(f"--delta must lie in (0, 1), got {args.delta}")
    for name in getattr(args, "baselines", []):
        if name not in ("zeros", "uniform", "laplace"):
            parser.error(f"unknown baseline {name!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, KeyError, RuntimeError) as exc:
        if args.json_errors:
            sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        else:
            sys.stderr.write(f"synthquery: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
