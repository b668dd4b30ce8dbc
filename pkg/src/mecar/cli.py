"""Command line entry point: ``mecar <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import edgecache, retrieval
from .harness import (
    AllocationPolicy,
    SweepSpec,
    SweepVariable,
    rows_to_csv,
    run_sweep,
    scenario_context,
    solve,
    summarize,
    summary_to_csv,
    LiveCache,
)
from .models import SchemeKind
from .scenario import ConfigError, apply_overrides, build_scenario, default_config, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_INFEASIBLE = 3

DEVICE_COUNTS = (6, 12, 18, 24, 30, 36)
TOLERANCES = (0.3, 0.35, 0.4, 0.45, 0.5, 0.55)
TOLERANCE_DEVICES = 30

SCHEMES = {s.value: s for s in SchemeKind}
POLICIES = {p.value: p for p in AllocationPolicy}


class UsageError(ConfigError):
    def __init__(self, message: str):
        super().__init__("arguments", message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with SimConfig fields")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config field (repeatable; workload.<field> for the workload)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", help="write the CSV here instead of stdout")


def _sweep_flags(p: argparse.ArgumentParser, policy: str) -> None:
    p.add_argument("--scheme", action="append", choices=sorted(SCHEMES), help="scheme to run (repeatable; default all)")
    p.add_argument("--policy", choices=sorted(POLICIES), default=policy)
    p.add_argument("--replications", type=int, default=50)
    p.add_argument("--values", help="comma separated sweep values")
    p.add_argument("--live-cache", action="store_true", help="draw edge hits from a simulated popularity cache")
    p.add_argument("--summary", action="store_true", help="print EDGE reductions after the rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mecar", description="Edge-assisted AR offloading simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-devices", help="latency and energy against the number of devices")
    _common(p)
    _sweep_flags(p, "minmax")

    p = sub.add_parser("sweep-tolerance", help="energy against the delay tolerance")
    _common(p)
    _sweep_flags(p, "minenergy")
    p.add_argument("--devices", type=int, default=TOLERANCE_DEVICES)

    p = sub.add_parser("solve", help="solve one scenario and print the allocation as JSON")
    _common(p)
    p.add_argument("--scheme", choices=sorted(SCHEMES), default="edge")
    p.add_argument("--policy", choices=sorted(POLICIES), default="minmax")

    p = sub.add_parser("retrieval-bench", help="recognition accuracy of the two-tier image database")
    _common(p)
    p.add_argument("--corpus", type=int, default=1000, help="images in the cloud database")
    p.add_argument("--edge", type=int, default=100, help="images (the lowest ids) also held at the edge")
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--sigma", type=float, default=0.1, help="descriptor noise")
    p.add_argument("-k", type=int, default=10, help="shortlist length")
    p.add_argument("--summary", action="store_true")

    p = sub.add_parser("cache-bench", help="hit ratio of the edge popularity cache under Zipf requests")
    _common(p)
    p.add_argument("--objects", type=int, default=100)
    p.add_argument("--exponent", type=float, default=0.8)
    p.add_argument("--capacity", type=int, default=10)
    p.add_argument("--threshold", type=int, default=3)
    p.add_argument("--requests", type=int, default=100_000)
    p.add_argument("--window", type=int, default=10_000, help="requests per reported window")
    p.add_argument("--summary", action="store_true")
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return apply_overrides(cfg, args.overrides)


def _parse_values(raw: str | None, default, cast):
    if raw is None:
        return tuple(default)
    try:
        return tuple(cast(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"cannot parse sweep values {raw!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_sweep(args, variable: SweepVariable) -> int:
    cfg = _config(args)
    if variable is SweepVariable.DEVICE_COUNT:
        values = _parse_values(args.values, DEVICE_COUNTS, int)
    else:
        values = _parse_values(args.values, TOLERANCES, float)
        cfg = apply_overrides(cfg, [f"num_devices={args.devices}"])
    if args.live_cache:
        cfg = cfg.replace(cache_hit_prob="from-cache-module")
    schemes = [SCHEMES[s] for s in args.scheme] if args.scheme else list(SchemeKind)
    spec = SweepSpec(
        variable=variable,
        values=values,
        replications=args.replications,
        schemes=schemes,
        allocation_policy=POLICIES[args.policy],
        base_config=cfg,
        live_cache=LiveCache(),
    )
    rows = run_sweep(spec)
    _emit(rows_to_csv(rows), args.out)
    if args.summary:
        sys.stdout.write(summary_to_csv(summarize(rows)))
    if rows and all(r.all_infeasible for r in rows):
        print("every device was infeasible in every row", file=sys.stderr)
        return EXIT_ALL_INFEASIBLE
    return EXIT_OK


def _solve(args) -> int:
    cfg = _config(args)
    scenario = build_scenario(cfg)
    ctx = scenario_context(scenario, LiveCache())
    alloc = solve(scenario, SCHEMES[args.scheme], POLICIES[args.policy], ctx)
    doc = alloc.as_dict()
    doc["policy"] = args.policy
    doc["edge_hits"] = list(ctx.edge_hits)
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _retrieval_bench(args) -> int:
    cfg = _config(args)
    if not 1 <= args.edge <= args.corpus:
        raise UsageError("--edge must lie in [1, --corpus]")
    if args.queries < 1 or args.k < 1 or args.sigma < 0:
        raise UsageError("--queries and -k must be positive, --sigma non-negative")
    corpus = [retrieval.canonical_record(i) for i in range(1, args.corpus + 1)]
    cloud = retrieval.build_index(corpus)
    edge = retrieval.build_index(corpus[: args.edge])
    rng = np.random.default_rng(cfg.seed)
    targets = rng.integers(1, args.corpus + 1, size=args.queries)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["query", "object_id", "kind", "matched_object_id", "correct", "shortlist_size"])
    counts = {k: 0 for k in retrieval.RetrievalKind}
    correct = 0
    for q, oid in enumerate(targets.tolist()):
        query = retrieval.extract(oid, args.sigma, seed=cfg.seed + q)
        res = retrieval.retrieve(query, edge, cloud, k=args.k)
        ok = res.matched_object_id == oid
        counts[res.kind] += 1
        correct += ok
        w.writerow([q, oid, res.kind.value, "" if res.matched_object_id is None else res.matched_object_id,
                    int(ok), res.shortlist_size])
    _emit(buf.getvalue(), args.out)
    if args.summary:
        print(f"top1_recall,{correct / args.queries:.4f}")
        for kind, c in counts.items():
            print(f"{kind.value}_fraction,{c / args.queries:.4f}")
    return EXIT_OK


def _cache_bench(args) -> int:
    cfg = _config(args)
    if args.requests < 1 or args.window < 1 or args.objects < 1:
        raise UsageError("--requests, --window and --objects must be positive")
    try:
        state = edgecache.CacheState(args.capacity, args.threshold)
        stream = edgecache.zipf_stream(args.objects, args.exponent, args.requests, cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    history = edgecache.simulate(state, stream)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_end", "hit_ratio"])
    for end in range(args.window, args.requests + 1, args.window):
        w.writerow([end, f"{edgecache.hit_ratio(history[end - args.window:end]):.6f}"])
    _emit(buf.getvalue(), args.out)
    if args.summary:
        half = history[len(history) // 2:]
        print(f"steady_hit_ratio,{edgecache.hit_ratio(half):.6f}")
        print(f"zipf_top_mass,{edgecache.zipf_top_mass(args.objects, args.exponent, args.capacity):.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "sweep-devices": lambda a: _run_sweep(a, SweepVariable.DEVICE_COUNT),
        "sweep-tolerance": lambda a: _run_sweep(a, SweepVariable.DELAY_TOLERANCE),
        "solve": _solve,
        "retrieval-bench": _retrieval_bench,
        "cache-bench": _cache_bench,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
