"""Command-line entry point: ``ptrees {gen,build,query,phi,bench,bounds}``.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from . import bounds as B
from .experiment import ExperimentConfig, emit_report, run_experiment
from .generators import (AdversarialParams, DoublingParams, random_topic_model,
                         sample_adversarial, sample_doubling, sample_doubling_queries,
                         sample_topic_model, sample_topic_queries)
from .io import (DatasetFormatError, load_dataset, load_points, load_tree, read_json,
                 save_dataset, save_tree)
from .potential import NeighborOrdering, potential_profile
from .trees import TreeFormatError, build_tree, tree_stats

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("partition_trees")


class InvariantError(RuntimeError):
    pass


# --- gen ------------------------------------------------------------------

GEN_KEYS = {
    "doubling": ("intrinsic_dim", "ambient_dim", "n", "seed"),
    "topic": ("topics", "vocab_size", "doc_length", "n", "seed"),
    "adversarial": ("n", "d", "M", "seed"),
}


def _gen_params(args) -> dict:
    params = read_json(args.config) if args.config else {}
    for key in ("generator", "n", "seed", "intrinsic_dim", "ambient_dim", "topics",
                "vocab_size", "doc_length", "d", "M"):
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    if "generator" not in params:
        raise ValueError("a generator is required (--generator or 'generator' in --config)")
    gen = params["generator"]
    if gen not in GEN_KEYS:
        raise ValueError(f"unknown generator {gen!r}")
    missing = [k for k in GEN_KEYS[gen] if k not in params]
    if missing:
        raise ValueError(f"{gen} generator is missing {missing}")
    extra = set(params) - set(GEN_KEYS[gen]) - {"generator"}
    if extra:
        raise ValueError(f"unknown keys for the {gen} generator: {sorted(extra)}")
    return params


def cmd_gen(args) -> int:
    p = _gen_params(args)
    gen = p["generator"]
    queries = None
    if gen == "doubling":
        params = DoublingParams(p["intrinsic_dim"], p["ambient_dim"], p["n"], p["seed"])
        data = sample_doubling(params)
        if args.queries:
            queries = sample_doubling_queries(params, args.queries)
    elif gen == "topic":
        params = random_topic_model(p["topics"], p["vocab_size"], p["doc_length"],
                                    n=p["n"], seed=p["seed"])
        data = sample_topic_model(params)
        if args.queries:
            queries = sample_topic_queries(params, args.queries)
    else:
        inst = sample_adversarial(AdversarialParams(p["n"], p["d"], p["M"], p["seed"]))
        data, queries = inst.data, (inst.query[None, :] if args.queries else None)
    save_dataset(data, args.out, args.format)
    if queries is not None:
        if not args.query_out:
            raise ValueError("--queries needs --query-out")
        save_dataset(queries, args.query_out, args.format)
    print(f"wrote {data.n}x{data.d} {gen} dataset to {args.out}")
    return EXIT_OK


# --- build / query ----------------------------------------------------------

def cmd_build(args) -> int:
    data = load_dataset(args.data, args.format)
    tree = build_tree(args.kind, data, args.leaf_size, args.alpha, args.seed)
    st = tree_stats(tree)
    if args.kind != "spill" and st.stored_indices != data.n:
        raise InvariantError(f"{args.kind} tree stores {st.stored_indices} indices for n={data.n}")
    save_tree(tree, args.out)
    print(f"{args.kind} tree: depth={st.depth} leaves={st.leaf_count} "
          f"stored={st.stored_indices} max_leaf={st.max_leaf_size} -> {args.out}")
    return EXIT_OK


def cmd_query(args) -> int:
    data = load_dataset(args.data, args.format)
    tree = load_tree(args.tree, data)
    queries = load_points(args.queries, args.format)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["query", "rank", "index", "distance", "leaves_visited",
                    "points_scanned", "short"])
        for i, q in enumerate(queries):
            res = tree.query(q, args.k)
            for r, (j, dist) in enumerate(zip(res.indices, res.distances)):
                w.writerow([i, r + 1, int(j), repr(float(dist)), res.leaves_visited,
                            res.points_scanned, int(res.short)])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# --- phi ----------------------------------------------------------------------

def cmd_phi(args) -> int:
    data = load_dataset(args.data, args.format)
    queries = load_points(args.queries, args.format)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["query", "k", "m", "phi"])
        for i, q in enumerate(queries):
            grid = None
            if args.beta is not None:
                grid = B.level_sizes(data.n, args.leaf_size, args.beta, args.k)
            prof = potential_profile(NeighborOrdering.from_points(data.points, q), args.k, grid)
            for m, ph in zip(prof.m_grid, prof.phi_values):
                w.writerow([i, args.k, int(m), repr(float(ph))])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# --- bench ------------------------------------------------------------------

BENCH_FIELDS = ("generator", "tree_kind", "n", "d", "leaf_size", "alpha", "k", "trials",
                "queries", "delta", "c_o", "seed", "intrinsic_dim", "topics", "doc_length",
                "M", "data_path", "query_path")


def cmd_bench(args) -> int:
    cfg = read_json(args.config) if args.config else {}
    for key in BENCH_FIELDS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    config = ExperimentConfig.from_dict(cfg)
    config.validate()
    report = run_experiment(config)
    if not 0.0 <= report.failure_rate <= 1.0:
        raise InvariantError(f"failure rate {report.failure_rate} outside [0, 1]")
    if args.out:
        emit_report(report, args.out)
    sys.stdout.write(report.to_text())
    return EXIT_OK


# --- bounds -----------------------------------------------------------------

def cmd_bounds(args) -> int:
    which = args.bound
    if which == "doubling-phi":
        val = B.doubling_phi_bound(args.m, args.d_o, args.delta, args.k)
    elif which == "doubling-failure":
        val = B.doubling_failure_bound(args.k, args.d_o, args.alpha, args.leaf_size,
                                       args.delta, args.c_o, args.kind, clamp=not args.raw)
    elif which == "topic-phi":
        val = B.topic_phi_bound(args.v, args.L, args.n, args.m, args.c_o)
    elif which == "summation":
        val = B.summation_lemma_bound(args.A, args.B, args.d_o, args.beta, args.leaf_size,
                                      with_log=args.with_log)
    elif which in ("spill", "virtual-spill", "rp"):
        data = load_dataset(args.data, args.format)
        q = load_points(args.queries, args.format)[args.query_index]
        prof = potential_profile(NeighborOrdering.from_points(data.points, q), args.k)
        if which == "rp":
            rep = B.rp_failure_bound(prof, args.leaf_size, data.n, args.k)
        else:
            rep = B.spill_failure_bound(prof, args.alpha, args.leaf_size, data.n, which, args.k)
        if args.out:
            emit_report(rep, args.out)
        sys.stdout.write(rep.to_text())
        return EXIT_OK
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(which)
    print(json.dumps({"bound": which, "value": val}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptrees", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--config", help="JSON file with generator parameters")
    g.add_argument("--generator", choices=sorted(GEN_KEYS))
    g.add_argument("--n", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--intrinsic-dim", type=int)
    g.add_argument("--ambient-dim", type=int)
    g.add_argument("--topics", type=int)
    g.add_argument("--vocab-size", type=int)
    g.add_argument("--doc-length", type=float)
    g.add_argument("--d", type=int)
    g.add_argument("--M", type=float)
    g.add_argument("--queries", type=int, default=0, help="also write this many queries")
    g.add_argument("--query-out")
    g.add_argument("--format", choices=["csv", "binary"])
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="build a tree over a dataset")
    b.add_argument("--data", required=True)
    b.add_argument("--kind", choices=["rp", "spill", "virtual-spill"], required=True)
    b.add_argument("--leaf-size", type=int, required=True)
    b.add_argument("--alpha", type=float, default=0.1)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--format", choices=["csv", "binary"])
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="defeatist k-NN queries against a saved tree")
    q.add_argument("--data", required=True)
    q.add_argument("--tree", required=True)
    q.add_argument("--queries", required=True)
    q.add_argument("--k", type=int, default=1)
    q.add_argument("--format", choices=["csv", "binary"])
    q.add_argument("--out")
    q.set_defaults(func=cmd_query)

    p = sub.add_parser("phi", help="potential profiles (CSV: query,k,m,phi)")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--beta", type=float,
                   help="only the tree levels m = beta^i n (needs --leaf-size)")
    p.add_argument("--leaf-size", type=int, default=1)
    p.add_argument("--format", choices=["csv", "binary"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_phi)

    e = sub.add_parser("bench", help="empirical failure rate vs. theoretical bound")
    e.add_argument("--config", help="JSON file with ExperimentConfig fields")
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--generator", choices=["doubling", "topic", "adversarial", "external-file"])
    e.add_argument("--tree-kind", choices=["rp", "spill", "virtual-spill"])
    for name, typ in (("n", int), ("d", int), ("leaf-size", int), ("alpha", float),
                      ("k", int), ("trials", int), ("queries", int), ("delta", float),
                      ("c-o", float), ("intrinsic-dim", int), ("topics", int),
                      ("doc-length", float), ("M", float), ("data-path", str),
                      ("query-path", str)):
        e.add_argument(f"--{name}", type=typ)
    e.add_argument("--out", help="report stem; writes <stem>.json and <stem>.txt")
    e.set_defaults(func=cmd_bench)

    bd = sub.add_parser("bounds", help="closed-form bound calculators")
    bd.add_argument("bound", choices=["doubling-phi", "doubling-failure", "topic-phi",
                                      "summation", "spill", "virtual-spill", "rp"])
    bd.add_argument("--m", type=int)
    bd.add_argument("--n", type=int)
    bd.add_argument("--k", type=int, default=1)
    bd.add_argument("--d-o", type=float)
    bd.add_argument("--delta", type=float, default=0.05)
    bd.add_argument("--alpha", type=float, default=0.1)
    bd.add_argument("--leaf-size", type=int)
    bd.add_argument("--c-o", type=float, default=0.125)
    bd.add_argument("--kind", choices=["spill", "virtual-spill", "rp"], default="spill")
    bd.add_argument("--raw", action="store_true", help="do not clamp to [0, 1]")
    bd.add_argument("--v", type=int)
    bd.add_argument("--L", type=float)
    bd.add_argument("--A", type=float)
    bd.add_argument("--B", type=float)
    bd.add_argument("--beta", type=float)
    bd.add_argument("--with-log", action="store_true")
    bd.add_argument("--data")
    bd.add_argument("--queries")
    bd.add_argument("--query-index", type=int, default=0)
    bd.add_argument("--format", choices=["csv", "binary"])
    bd.add_argument("--out")
    bd.set_defaults(func=cmd_bounds)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, DatasetFormatError, TreeFormatError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
