"""Command-line harness.

Subcommands: run, compare, minimize, justify, spread. Results go to CSV
files whose first lines are ``#`` comments echoing the schema version and
the resolved configuration. Wall-clock timings go to a ``.timing`` sidecar
so the main CSV is byte-identical for identical inputs and seed.

Exit codes: 0 ok, 2 configuration error, 3 infeasible, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np

from .baselines import BASELINE_KINDS, parse_baseline
from .diffusion import SpreadError, estimate_spread
from .graph import GraphError, apply_weighted_cascade, load_edge_list, write_label_map
from .paic import (AllocationError, ModelError, ScenarioConfig, SeedAllocation, SETTINGS,
                   evaluate_allocation, random_growth_final_ratios, round_weights,
                   surrogate_ratio, surrogate_rho_oi)
from .rng import RngStream
from .rr import CollectionError
from .selection import ImmParams, SelectionError, imm_single_round, prm_imm
from .variants import (InfeasibleError, fixed_allocator, minimize_rounds,
                       minimize_seed_budget, prm_imm_allocator)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4
ALGORITHMS = ("PRM-IMM",) + tuple(k for k in BASELINE_KINDS if k != "Greedy") + (
    "Greedy<sims>", "fixed")

RUN_COLUMNS = ["algo", "k", "setting", "ratio", "ratio_se", "surrogate", "surrogate_ratio",
               "round_counts", "max_round", "theta_final", "allocation"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------


def _load_graph(args):
    if not args.graph:
        raise ConfigError("--graph is required")
    path = Path(args.graph)
    if not path.is_file():
        raise ConfigError(f"graph file not found: {path}")
    g = load_edge_list(path, probability_column=not args.wc)
    return apply_weighted_cascade(g) if args.wc else g


def _load_config(args) -> ScenarioConfig:
    if not args.config:
        raise ConfigError("--config is required")
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = ScenarioConfig.from_text(path.read_text(encoding="utf-8"))
    if args.setting:
        cfg = ScenarioConfig(cfg.d0n, cfg.d0p, cfg.growth, cfg.T, cfg.promo, args.setting.upper())
    return cfg


def _int_list(text, name):
    try:
        vals = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--{name} must be comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 0:
        raise ConfigError(f"--{name} needs non-negative integers")
    return vals


def _params(args, k):
    return ImmParams(args.epsilon, args.ell, max(k, 1), args.eps_prime)


def _parse_allocation(text, graph, setting) -> SeedAllocation:
    """``label:round`` pairs separated by commas."""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"allocation entry {item!r} is not label:round")
        lab, rnd = item.rsplit(":", 1)
        try:
            pairs.append((graph.id_of(lab), int(rnd)))
        except ValueError as exc:
            raise ConfigError(f"allocation entry {item!r}: {exc}") from None
    return SeedAllocation(tuple(pairs), setting)


def _check_algo(name):
    if name in ("PRM-IMM", "fixed"):
        return
    try:
        parse_baseline(name)
    except ValueError:
        raise ConfigError(f"unknown algorithm {name!r}; registered: {', '.join(ALGORITHMS)}") \
            from None


# ---------------------------------------------------------------------------
# core evaluation
# ---------------------------------------------------------------------------


def allocate(name, graph, config, k, args, stream, ranking=None):
    """Returns ``(allocation, theta_final)``."""
    if name == "fixed":
        if not args.allocation:
            raise ConfigError("algorithm 'fixed' needs --allocation label:round,...")
        alloc = _parse_allocation(args.allocation, graph, config.setting)
        alloc.validate(n=graph.n, T=config.T)
        return alloc, 0
    if k == 0:
        return SeedAllocation((), config.setting), 0
    if name == "PRM-IMM":
        alloc, trace = prm_imm(graph, config.T, round_weights(config), _params(args, k),
                               stream.child("prm-imm", k), setting=config.setting,
                               workers=args.workers)
        return alloc, trace.theta_final
    spec = parse_baseline(name)
    return spec.run(graph, config, k, stream.child(name, k), params=_params(args, k),
                    ranking=ranking), 0


def evaluate_row(name, graph, config, k, args, stream, alloc, theta):
    ev = evaluate_allocation(graph, config, alloc, args.sims, stream.child("eval", name, k),
                             workers=args.workers)
    rho = surrogate_rho_oi(round_weights(config), ev.sigmas)
    return {
        "algo": name, "k": len(alloc) if name == "fixed" else k, "setting": alloc.setting,
        "ratio": ev.ratio, "ratio_se": ev.ratio_se, "surrogate": rho,
        "surrogate_ratio": surrogate_ratio(config, rho),
        "round_counts": ";".join(str(c) for c in alloc.per_round_counts(config.T)),
        "max_round": alloc.max_round, "theta_final": theta,
        "allocation": ";".join(f"{lab}@{t}" for lab, t in alloc.with_labels(graph)),
    }


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header_lines, columns, rows):
    buf = io.StringIO()
    buf.write(f"# prmimm schema={SCHEMA_VERSION} columns={','.join(columns)}\n")
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    text = buf.getvalue()
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return text


def _header(args, config):
    lines = [f"seed={args.seed} sims={args.sims} epsilon={args.epsilon} ell={args.ell}",
             f"graph={Path(args.graph).name} weighted_cascade={bool(args.wc)}"]
    lines += [f"config {k}={v}" for k, v in config.to_mapping().items()]
    return lines


def _sidecars(args, graph, timings):
    if not args.out:
        return
    write_label_map(graph, f"{args.out}.labels.csv")
    with open(f"{args.out}.timing", "w", encoding="utf-8") as fh:
        fh.write("algo,k,seconds\n")
        for algo, k, sec in timings:
            fh.write(f"{algo},{k},{sec:.6f}\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    graph = _load_graph(args)
    config = _load_config(args)
    algos = [a.strip() for a in args.algo.split(",") if a.strip()]
    for a in algos:
        _check_algo(a)
    ks = _int_list(args.k, "k") if args.k is not None else [0]
    stream = RngStream(args.seed)
    rows, timings = [], []
    for name in algos:
        for k in ks:
            t0 = time.perf_counter()
            alloc, theta = allocate(name, graph, config, k, args, stream)
            rows.append(evaluate_row(name, graph, config, k, args, stream, alloc, theta))
            timings.append((name, k, time.perf_counter() - t0))
    _write_csv(args.out, _header(args, config), RUN_COLUMNS, rows)
    _sidecars(args, graph, timings)
    return EXIT_OK


def cmd_compare(args) -> int:
    graph = _load_graph(args)
    config = _load_config(args)
    algos = [a.strip() for a in args.algo.split(",") if a.strip()]
    for a in algos:
        _check_algo(a)
    ks = _int_list(args.k, "k")
    rows, timings = [], []
    for rep in range(args.reps):
        stream = RngStream(args.seed).child("rep", rep)
        for k in ks:
            ranking = None
            if any(parse_baseline(a).needs_ranking for a in algos
                   if a not in ("PRM-IMM", "fixed")):
                m = min(k, graph.n)
                ranking = imm_single_round(graph, m, _params(args, m), stream.child("rank", k)) \
                    if m else []
            for name in algos:
                t0 = time.perf_counter()
                alloc, theta = allocate(name, graph, config, k, args, stream, ranking)
                row = evaluate_row(name, graph, config, k, args, stream, alloc, theta)
                row["rep"] = rep
                rows.append(row)
                timings.append((name, k, time.perf_counter() - t0))
    agg = []
    for name in algos:
        for k in ks:
            vals = np.array([r["ratio"] for r in rows if r["algo"] == name and r["k"] == k])
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            agg.append({"algo": name, "k": k, "reps": vals.size, "ratio_mean": float(vals.mean()),
                        "ratio_se": se})
    _write_csv(args.out, _header(args, config) + [f"reps={args.reps}"],
               ["algo", "k", "reps", "ratio_mean", "ratio_se"], agg)
    _sidecars(args, graph, timings)
    return EXIT_OK


def cmd_minimize(args) -> int:
    graph = _load_graph(args)
    config = _load_config(args)
    stream = RngStream(args.seed)
    if args.algo == "fixed":
        allocator = fixed_allocator(_parse_allocation(args.allocation or "", graph,
                                                      config.setting))
    elif args.algo in (None, "PRM-IMM"):
        allocator = prm_imm_allocator(_params(args, 1))
    else:
        raise ConfigError("minimize supports --algo PRM-IMM or fixed")
    try:
        if args.mode == "seeds":
            res = minimize_seed_budget(graph, config, args.T, rng=stream, allocator=allocator,
                                       sims=args.sims, max_sims=args.sims * 16)
        else:
            if args.k is None:
                raise ConfigError("round minimization needs --k")
            k = _int_list(args.k, "k")[0]
            res = minimize_rounds(graph, config, k, rng=stream, allocator=allocator,
                                  t_max=args.t_max, sims=args.sims, max_sims=args.sims * 16)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    rows = [{"kind": "probe", "value": p.value, "ratio": p.ratio, "ratio_se": p.se,
             "sims": p.sims, "feasible": int(p.feasible)} for p in res.search_log]
    rows.append({"kind": "answer", "value": res.value, "ratio": res.achieved_ratio,
                 "allocation": ";".join(f"{lab}@{t}" for lab, t in res.allocation.with_labels(graph))})
    _write_csv(args.out, _header(args, config) + [f"mode={args.mode}"],
               ["kind", "value", "ratio", "ratio_se", "sims", "feasible", "allocation"], rows)
    _sidecars(args, graph, [])
    return EXIT_OK


def cmd_justify(args) -> int:
    graph = _load_graph(args)
    config = _load_config(args)
    ks = _int_list(args.k, "k")
    stream = RngStream(args.seed)
    integer_growth = bool(np.all(config.z_vector() == np.round(config.z_vector())))
    rows = []
    for k in ks:
        alloc, theta = allocate("PRM-IMM", graph, config, k, args, stream)
        row = evaluate_row("PRM-IMM", graph, config, k, args, stream, alloc, theta)
        dev = abs(row["surrogate_ratio"] - row["ratio"]) / abs(row["ratio"]) if row["ratio"] else 0.0
        out = {"k": k, "expected_ratio": row["ratio"], "expected_se": row["ratio_se"],
               "surrogate_ratio": row["surrogate_ratio"], "surrogate_deviation": dev,
               "deviation_le_5pct": int(dev <= 0.05)}
        if integer_growth:
            finals = random_growth_final_ratios(graph, config, alloc, args.trajectories,
                                                stream.child("random", k))
            out["random_mean"] = float(finals.mean())
            out["random_se"] = float(finals.std(ddof=1) / np.sqrt(finals.size))
            out["random_deviation"] = abs(out["random_mean"] - row["ratio"]) / abs(row["ratio"]) \
                if row["ratio"] else 0.0
        rows.append(out)
    cols = ["k", "expected_ratio", "expected_se", "random_mean", "random_se", "random_deviation",
            "surrogate_ratio", "surrogate_deviation", "deviation_le_5pct"]
    _write_csv(args.out, _header(args, config) + [f"trajectories={args.trajectories}"], cols, rows)
    _sidecars(args, graph, [])
    return EXIT_OK


def cmd_spread(args) -> int:
    graph = _load_graph(args)
    if not args.seeds:
        raise ConfigError("spread needs --seeds label,label,...")
    seeds = [graph.id_of(s.strip()) for s in args.seeds.split(",") if s.strip()]
    est = estimate_spread(graph, seeds, args.sims, RngStream(args.seed).child("spread-cmd"),
                          workers=args.workers)
    print(f"spread={est.mean!r} se={est.se!r} sims={est.n}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prmimm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--graph", help="edge list: 'u v p' lines, or 'u v' with --wc")
        sp.add_argument("--wc", action="store_true",
                        help="edge list has no probability column; use 1/in-degree")
        if config:
            sp.add_argument("--config", help="scenario file with key = value lines")
            sp.add_argument("--setting", choices=[s for s in SETTINGS] + [s.lower() for s in SETTINGS])
            sp.add_argument("--epsilon", type=float, default=0.1)
            sp.add_argument("--ell", type=float, default=1.0)
            sp.add_argument("--eps-prime", type=float, default=None)
            sp.add_argument("--allocation", help="for --algo fixed: label:round,...")
        sp.add_argument("--sims", type=int, default=2000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output CSV (stdout if omitted)")
        sp.add_argument("--workers", type=int, default=None)

    sp = sub.add_parser("run", help="run algorithms and evaluate their allocations")
    common(sp)
    sp.add_argument("--algo", default="PRM-IMM", help="comma-separated: " + ", ".join(ALGORITHMS))
    sp.add_argument("--k", help="budget(s), comma-separated")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="algorithms x budgets averaged over repetitions")
    common(sp)
    sp.add_argument("--algo", required=True)
    sp.add_argument("--k", required=True)
    sp.add_argument("--reps", type=int, default=10)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("minimize", help="smallest budget or horizon that reaches ratio 1")
    common(sp)
    sp.add_argument("--mode", choices=("seeds", "rounds"), default="seeds")
    sp.add_argument("--algo", default="PRM-IMM")
    sp.add_argument("--k")
    sp.add_argument("--T", type=int, default=None)
    sp.add_argument("--t-max", type=int, default=1024)
    sp.set_defaults(func=cmd_minimize)

    sp = sub.add_parser("justify", help="random vs expected growth and surrogate fidelity")
    common(sp)
    sp.add_argument("--k", required=True)
    sp.add_argument("--trajectories", type=int, default=10000)
    sp.set_defaults(func=cmd_justify)

    sp = sub.add_parser("spread", help="Monte Carlo influence spread of a seed set")
    common(sp, config=False)
    sp.add_argument("--seeds")
    sp.set_defaults(func=cmd_spread)
    return p


CONFIG_ERRORS = (ConfigError, GraphError, ModelError, AllocationError, SelectionError,
                 CollectionError, SpreadError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
