"""Command line: ``dknn gen | query | select | bench``.

Exit codes: 0 success, 2 usage or validation error, 3 protocol violation,
4 incorrect trial in a bench run.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import ALGORITHMS, BenchSpec, run_bench
from .core import DatasetError, Metric, assign_label, oracle_knn, partition, read_dataset, write_dataset
from .datagen import DISTRIBUTIONS, generate, random_query
from .knn import KnnConfig, run_baseline, run_knn, run_select_all
from .simulator import MessageLog, SimulationError, build_machines

EXIT_OK, EXIT_USAGE, EXIT_PROTOCOL, EXIT_ACCEPTANCE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in str(text).split(",") if x.strip()]


def read_config(path: str) -> dict[str, str]:
    """Flat ``key=value`` file; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _add_run_flags(p: argparse.ArgumentParser, algo_default: str | None) -> None:
    p.add_argument("--dataset", required=True, help="CSV dataset (id,label,c0,...)")
    p.add_argument("--q", help="query point as comma-separated integers (default: random from --seed)")
    p.add_argument("--l", type=int, required=True, help="number of neighbors")
    p.add_argument("--k", type=int, default=8, help="number of machines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--metric", default="l2", choices=["l1", "l2", "linf"])
    p.add_argument("--partition", default="uniform", choices=["uniform", "round-robin"])
    if algo_default is not None:
        p.add_argument("--algo", default=algo_default, choices=ALGORITHMS)
    p.add_argument("--sample-factor", type=int, default=12)
    p.add_argument("--rank-factor", type=int, default=21)
    p.add_argument("--label-mode", default="classify", choices=["classify", "regress"])
    p.add_argument("--verify", action="store_true", help="compare against the brute-force oracle")
    p.add_argument("--log", help="write the message log as CSV (round,kind,src,dst)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dknn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="flat key=value file supplying flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a synthetic dataset")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, default=1)
    gen.add_argument("--k", type=int, default=1, help="machines of origin encoded in the ids")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--distribution", default="uniform", choices=DISTRIBUTIONS)
    gen.add_argument("--out", required=True)

    _add_run_flags(sub.add_parser("query", help="answer one l-NN query"), "knn")
    _add_run_flags(sub.add_parser("select", help="plain distributed selection over all points"), None)

    bench = sub.add_parser("bench", help="run a benchmark sweep")
    bench.add_argument("--k", type=_int_list, default=[16])
    bench.add_argument("--l", type=_int_list, default=[128, 256, 512, 1024])
    bench.add_argument("--n", type=_int_list, default=[2**18])
    bench.add_argument("--d", type=_int_list, default=[1])
    bench.add_argument("--trials", type=int, default=30)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--metric", default="l2", choices=["l1", "l2", "linf"])
    bench.add_argument("--algo", type=_str_list, default=["knn", "baseline"])
    bench.add_argument("--distribution", default="uniform", choices=DISTRIBUTIONS)
    bench.add_argument("--partition", default="uniform", choices=["uniform", "round-robin"])
    bench.add_argument("--sample-factor", type=int, default=12)
    bench.add_argument("--rank-factor", type=int, default=21)
    bench.add_argument("--verify", dest="verify", action="store_true", default=None,
                       help="always verify (default: only when n <= 10^6)")
    bench.add_argument("--no-verify", dest="verify", action="store_false")
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        defaults = {}
        for action in sp._actions:
            if action.dest in values:
                raw = values[action.dest]
                defaults[action.dest] = action.type(raw) if action.type else raw
                action.required = False
        sp.set_defaults(**defaults)


def _load_query(args, d: int) -> list[int]:
    if args.q:
        try:
            return _int_list(args.q)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"--q: {exc}") from None
    return random_query(d, args.seed, args.trial)


def cmd_gen(args) -> int:
    ds = generate(args.n, args.d, args.k, args.seed, args.distribution)
    write_dataset(ds, args.out)
    print(json.dumps({"out": args.out, "n": ds.n, "d": ds.d}))
    return EXIT_OK


def cmd_query(args, algo: str) -> int:
    ds = read_dataset(args.dataset)
    if not 0 <= args.l <= ds.n:
        raise UsageError(f"--l {args.l} must be between 0 and n={ds.n}")
    query = _load_query(args, ds.d)
    metric = Metric.parse(args.metric)
    machines = build_machines(ds, partition(ds, args.k, args.seed, args.partition))
    log = MessageLog() if args.log else None
    if algo == "knn":
        cfg = KnnConfig(args.l, args.sample_factor, args.rank_factor, metric, args.seed)
        res = run_knn(machines, query, cfg, args.trial, log=log)
    elif algo == "baseline":
        res = run_baseline(machines, query, args.l, metric, args.seed, args.trial, log=log)
    else:
        res = run_select_all(machines, query, args.l, metric, args.seed, args.trial, log=log)
    if log is not None:
        log.to_csv(args.log)
    out = {
        "algo": algo, "k": args.k, "l": args.l, "n": ds.n, "query": list(query),
        "neighbor_ids": res.ids,
        "rounds": res.metrics.rounds, "messages": res.metrics.messages,
        "phase_rounds": res.metrics.phase_rounds, "messages_by_kind": res.metrics.messages_by_kind,
        "survivors": res.survivors, "fallback_taken": res.fallback_taken,
    }
    if ds.labels is not None and res.ids:
        labels = ds.label_of()
        out["label"] = assign_label([labels[i] for i in res.ids], args.label_mode)
    if args.verify:
        out["correct"] = set(res.ids) == oracle_knn(ds, query, args.l, metric)
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = BenchSpec(
        ks=args.k, ls=args.l, ns=args.n, ds=args.d, trials=args.trials, seed=args.seed,
        metric=args.metric, algorithms=tuple(args.algo), distribution=args.distribution,
        partition=args.partition, verify=args.verify,
        sample_factor=args.sample_factor, rank_factor=args.rank_factor,
    )
    result = run_bench(spec, jobs=args.jobs)
    csv_path, json_path = result.write(args.out)
    summary = result.summary()
    for row in summary["baseline_over_knn"]:
        print(f"k={row['k']} l={row['l']} n={row['n']} d={row['d']} "
              f"baseline/knn rounds={row['round_ratio']:.2f} messages={row['message_ratio']:.2f}")
    print(f"wrote {csv_path} and {json_path}")
    failures = result.failures
    if failures:
        for r in failures[:10]:
            print(f"INCORRECT: k={r.k} l={r.l} n={r.n} algo={r.algo} trial={r.trial}", file=sys.stderr)
        print(f"{len(failures)} incorrect trial(s)", file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "query":
            return cmd_query(args, args.algo)
        if args.command == "select":
            return cmd_query(args, "selection")
        return cmd_bench(args)
    except SimulationError as exc:
        print(f"dknn: protocol violation: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (UsageError, DatasetError, ValueError, OverflowError, OSError) as exc:
        print(f"dknn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
