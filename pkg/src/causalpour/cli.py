"""Command-line pipeline: simulate -> discover -> train -> analyze -> evaluate.

Every command records a run manifest next to its primary output listing
inputs, outputs, seeds and the exact configuration, so artifacts can be
traced and reruns compared. Data artifacts are byte-stable for a fixed
seed. Exit codes: 0 success, 2 usage or configuration problems, 3 data or
schema problems, 4 numeric failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .actual_causation import AcQuery, default_grid, raising_region
from .discovery import (CiTest, DiscoveryError, Tiers, UnresolvedUndirectedEdge,
                        bootstrap, infer_kinds, stable_graph)
from .graph import CausalGraph, Binary, GraphError
from .interventions import (InterventionError, TrainedModel, do_curve,
                            save_curve_csv)
from .nade import Diverged, NadeError, NonFiniteGradient, NonFiniteLoss, TrainConfig, fit
from .selection import (DESIGNATED_PATHS, SelectionError, SelectionPolicy,
                        select_alternative)
from .evaluation import (EvaluationError, evaluate_model, save_rate_histogram,
                         save_report)
from .world import (COLUMN_TO_NODE, DEFAULT_CONFIG, Trial, WorldError,
                    config_from_dict, generate_dataset, load_csv, load_jsonl,
                    pouring_graph, pouring_tier_groups, save_csv, save_jsonl,
                    trial_columns, trial_context)

SEED_ENV = "CAUSALPOUR_SEED"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(command, args, inputs, outputs, seed):
    """Run manifest next to the primary output (first entry of outputs)."""
    outputs = [str(p) for p in outputs]
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items())
                   if k not in ("func", "config")},
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": outputs,
        "timestamp": _utc_now(),
        "version": __version__,
    }
    path = Path(outputs[0]).with_suffix(Path(outputs[0]).suffix + ".manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


def resolve_seed(args, fallback=0):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return fallback


def load_world_config(path):
    if path is None:
        return DEFAULT_CONFIG
    try:
        with open(path) as fh:
            return config_from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, WorldError) as exc:
        raise ConfigError(f"bad world config {path}: {exc}") from exc


def load_trials(path):
    path = str(path)
    try:
        if path.endswith(".jsonl"):
            return load_jsonl(path)
        return load_csv(path)
    except FileNotFoundError as exc:
        raise SchemaError(str(exc)) from exc
    except (WorldError, ValueError) as exc:
        raise SchemaError(f"cannot read trials from {path}: {exc}") from exc


def dataset_columns(trials, graph=None):
    """Column arrays keyed by graph node names."""
    cols = trial_columns(trials)
    if graph is not None:
        missing = [n for n in graph.node_names if n not in cols]
        if missing:
            raise SchemaError(f"dataset lacks columns for nodes {missing}")
    return cols


def parse_trial_spec(spec) -> Trial:
    """Parse ``rc=0.7,fu=0.51,rd=0.7,rv=0.73,s=1`` into a Trial."""
    fields = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError(f"trial field {part!r} is not key=value")
        key, _, value = part.partition("=")
        fields[key.strip().lower()] = float(value)
    required = {"rc", "fu", "rd", "rv", "s"}
    if set(fields) != required:
        raise ConfigError(f"trial spec needs exactly {sorted(required)}, "
                          f"got {sorted(fields)}")
    try:
        return Trial(fields["rc"], fields["fu"], fields["rd"], fields["rv"],
                     bool(fields["s"]))
    except WorldError as exc:
        raise ConfigError(str(exc)) from exc


def parse_sweep(spec):
    """Parse ``RD:0.5:1.5:101`` into (node, grid)."""
    parts = spec.split(":")
    if len(parts) != 4:
        raise ConfigError(f"sweep must be var:lo:hi:n, got {spec!r}")
    node, lo, hi, n = parts[0], float(parts[1]), float(parts[2]), int(parts[3])
    if n < 1:
        raise ConfigError("sweep needs at least one point")
    if n == 1:
        return node, np.array([lo])
    return node, np.linspace(lo, hi, n)


def parse_assignments(pairs):
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"fix expects node=value, got {pair!r}")
        node, _, value = pair.partition("=")
        out[node.strip()] = float(value)
    return out


# -- commands ---------------------------------------------------------------

def cmd_simulate(args):
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    seed = resolve_seed(args)
    config = load_world_config(args.world_config)
    trials = generate_dataset(args.n, seed=seed, config=config)
    if str(args.out).endswith(".jsonl"):
        save_jsonl(trials, args.out)
    else:
        save_csv(trials, args.out)
    write_manifest("simulate", args, [], [args.out], seed)
    rate = sum(t.spillage for t in trials) / len(trials)
    print(f"wrote {len(trials)} trials to {args.out} (spillage rate {rate:.3f})")
    return EXIT_OK


def _tiers_for(args, columns):
    if args.tiers == "none":
        return None
    if args.tiers is not None and args.tiers != "auto":
        try:
            return Tiers.from_json(args.tiers)
        except (OSError, json.JSONDecodeError, DiscoveryError) as exc:
            raise ConfigError(f"bad tiers file {args.tiers}: {exc}") from exc
    if set(columns) == {"RC", "FU", "RD", "RV", "S"}:
        return Tiers(tuple(tuple(g) for g in pouring_tier_groups()))
    return None


def cmd_discover(args):
    seed = resolve_seed(args)
    trials = load_trials(args.data)
    columns = dataset_columns(trials)
    tiers = _tiers_for(args, columns)
    if args.boot < 1:
        raise ConfigError("--boot must be >= 1")
    if args.boot < 100:
        print(f"warning: {args.boot} bootstraps is too few for stable edge "
              "frequencies", file=sys.stderr)
    test = CiTest(kind=args.test, alpha=args.alpha)
    table = bootstrap(columns, n_boot=args.boot, test=test, tiers=tiers, seed=seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "edge_frequencies.csv"
    graph_path = out_dir / "graph.json"
    table.save_csv(table_path)
    kinds = infer_kinds(columns)
    if set(columns) == {"RC", "FU", "RD", "RV", "S"}:
        kinds = {n: k for n, k in pouring_graph().nodes}
    graph = stable_graph(table, threshold=args.threshold, tiers=tiers, kinds=kinds)
    graph.to_json(graph_path)
    write_manifest("discover", args, [args.data], [table_path, graph_path], seed)
    print(f"stable graph: {len(graph.edges)} edges -> {graph_path}")
    return EXIT_OK


def cmd_train(args):
    seed = resolve_seed(args)
    try:
        graph = CausalGraph.from_json(args.graph)
    except (OSError, json.JSONDecodeError, GraphError) as exc:
        raise SchemaError(f"cannot load graph {args.graph}: {exc}") from exc
    trials = load_trials(args.data)
    columns = dataset_columns(trials, graph)
    node_seeds = np.random.SeedSequence(seed).generate_state(len(graph.node_names))
    mechanisms = {}
    for node, node_seed in zip(sorted(graph.node_names), node_seeds):
        head = "bernoulli" if isinstance(graph.kind(node), Binary) else "gaussian"
        config = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                             batch_size=args.batch_size, seed=int(node_seed))
        mechanisms[node] = fit(columns, node, head, graph.parents(node), config)
        print(f"trained {node}: nll {mechanisms[node].train_history[0]:.4f} -> "
              f"{min(mechanisms[node].train_history):.4f}")
    model = TrainedModel(graph, mechanisms)
    model.save(args.out)
    write_manifest("train", args, [args.data, args.graph], [args.out], seed)
    return EXIT_OK


def _load_model(path):
    try:
        return TrainedModel.load(path)
    except (OSError, json.JSONDecodeError, KeyError, GraphError, NadeError,
            InterventionError) as exc:
        raise SchemaError(f"cannot load model {path}: {exc}") from exc


def cmd_do_curve(args):
    seed = resolve_seed(args)
    model = _load_model(args.model)
    node, grid = parse_sweep(args.sweep)
    context = parse_assignments(args.fix)
    rows = do_curve(model, args.outcome, (node, grid), context=context,
                    n_samples=args.n_samples, seed=seed)
    save_curve_csv(rows, args.out)
    write_manifest("do-curve", args, [args.model], [args.out], seed)
    print(f"wrote {len(rows)} curve points to {args.out}")
    return EXIT_OK


def _ac_query(args, model, trial, seed):
    if args.cause == "S":
        raise ConfigError("the outcome cannot be the cause")
    paths = model.graph.directed_paths(args.cause, "S")
    if not paths:
        raise ConfigError(f"no directed path from {args.cause} to S")
    if args.path is None:
        designated = DESIGNATED_PATHS.get(args.cause)
        path = (designated if designated and list(designated) in paths
                else paths[0])
    else:
        if not 0 <= args.path < len(paths):
            raise ConfigError(f"--path must be in [0, {len(paths) - 1}]")
        path = paths[args.path]
    return AcQuery(model=model, cause=args.cause, outcome="S", path=tuple(path),
                   context=trial_context(trial),
                   grid=default_grid(model, args.cause, args.grid_points),
                   n_samples=args.n_samples, seed=seed)


def cmd_ac(args):
    seed = resolve_seed(args)
    model = _load_model(args.model)
    trial = parse_trial_spec(args.trial)
    query = _ac_query(args, model, trial, seed)
    region = raising_region(query)
    region.to_json(args.out)
    outputs = [args.out]
    if args.csv:
        region.to_csv(args.csv)
        outputs.append(args.csv)
    write_manifest("ac", args, [args.model], outputs, seed)
    held = int(np.sum(region.raising))
    print(f"raising holds at {held}/{len(region.grid)} grid values -> {args.out}")
    return EXIT_OK


def cmd_select(args):
    seed = resolve_seed(args)
    model = _load_model(args.model)
    trial = parse_trial_spec(args.trial)
    query = _ac_query(args, model, trial, seed)
    region = raising_region(query)
    policy = SelectionPolicy(threshold=args.threshold, criterion=args.criterion)
    result = select_alternative(region, query.actual_value, policy)
    payload = {"trial_id": args.trial_id, "variable": args.cause,
               "result": result.kind, "value": result.value,
               "predicted_probability": result.predicted_probability,
               "threshold": args.threshold}
    text = json.dumps(payload, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        write_manifest("select", args, [args.model], [args.out], seed)
    print(text)
    return EXIT_OK


def cmd_evaluate(args):
    seed = resolve_seed(args)
    model = _load_model(args.model)
    trials = load_trials(args.test_data)
    config = load_world_config(args.world_config)
    report = evaluate_model(model, trials, threshold=args.threshold,
                            replications=args.replications,
                            hist_trials=args.hist_trials,
                            n_samples=args.n_samples, seed=seed,
                            world_config=config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    save_report(report, report_path)
    outputs = [report_path]
    for var, rates in report.get("replication_rates", {}).items():
        hist_path = out_dir / f"success_rates_{var.lower()}.csv"
        save_rate_histogram(rates, hist_path)
        outputs.append(hist_path)
    write_manifest("evaluate", args, [args.model, args.test_data], outputs, seed)
    cov = report["coverage"]
    print(f"coverage RD={cov['RD']:.3f} FU={cov['FU']:.3f} RC={cov['RC']:.3f}; "
          f"confusion tpr={report['confusion']['tpr']:.3f} "
          f"tnr={report['confusion']['tnr']:.3f}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="causalpour",
        description="Causal pipeline for the synthetic pouring task.")
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic pouring trials")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--world-config", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discover", help="bootstrap PC structure learning")
    p.add_argument("--data", required=True)
    p.add_argument("--boot", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--test", choices=["fisher_z", "dg_lrt"], default="fisher_z")
    p.add_argument("--tiers", default="auto",
                   help="tiers JSON file, 'auto' or 'none'")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("train", help="fit one density estimator per node")
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("do-curve", help="interventional probability sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--outcome", default="S")
    p.add_argument("--sweep", required=True, help="var:lo:hi:n")
    p.add_argument("--fix", action="append", default=None, metavar="NODE=VALUE")
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_do_curve)

    p = sub.add_parser("ac", help="actual-causation contrastive sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--trial", required=True,
                   help="rc=..,fu=..,rd=..,rv=..,s=..")
    p.add_argument("--cause", required=True)
    p.add_argument("--path", type=int, default=None,
                   help="index into directed_paths(cause, S)")
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_ac)

    p = sub.add_parser("select", help="choose an alternative action parameter")
    p.add_argument("--model", required=True)
    p.add_argument("--trial", required=True)
    p.add_argument("--cause", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--criterion",
                   choices=["closest_to_actual", "lowest_probability"],
                   default="closest_to_actual")
    p.add_argument("--path", type=int, default=None)
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trial-id", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("evaluate", help="held-out evaluation report")
    p.add_argument("--model", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--hist-trials", type=int, default=100)
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--world-config", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    return parser


def _apply_config_defaults(parser, argv):
    """Load --config (if present) and install its values as parser defaults."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {known.config}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config file must hold a JSON object")
    defaults = {str(k).replace("-", "_"): v for k, v in payload.items()}
    for action in parser._subparsers._group_actions:
        for sub_parser in action.choices.values():
            known_dests = {a.dest for a in sub_parser._actions}
            sub_parser.set_defaults(**{k: v for k, v in defaults.items()
                                       if k in known_dests})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, WorldError, EvaluationError, UnresolvedUndirectedEdge,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (Diverged, NonFiniteLoss, NonFiniteGradient) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GraphError, DiscoveryError, InterventionError, SelectionError,
            NadeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
