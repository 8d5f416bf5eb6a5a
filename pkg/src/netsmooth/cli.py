"""Command-line entry point: ``netsmooth <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 missing external data.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .analysis import write_msd_csv
from .config import ConfigError, ExperimentConfig, load_config
from .data import export_network_csv
from .graph import save_graph, save_matrix_csv
from .train import DivergedError, evaluate, load_state, save_state

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "grad_mode", None):
        cfg.train = dataclasses.replace(cfg.train, grad_mode=args.grad_mode)
    if getattr(args, "paper_literal_alg1", False):
        cfg.train = dataclasses.replace(cfg.train, literal_alg1=True)
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_graph(args) -> int:
    cfg = _config(args)
    net = experiments.build_network(cfg)
    out = _outdir(cfg)
    save_graph(net.g, out / "graph.json")
    save_matrix_csv(net.A, out / "combination.csv")
    save_matrix_csv(net.L, out / "laplacian.csv")
    deg = net.g.degrees() - 1
    print(f"K={net.g.K} connected={net.g.connected} "
          f"degree min/mean/max={deg.min()}/{deg.mean():.2f}/{deg.max()}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    net = experiments.build_network(cfg)
    out = _outdir(cfg)
    export_network_csv(net.ds, out / "data", coords=net.g.coords)
    _dump(out / "split.json", {"train": net.split.train.tolist(), "test": net.split.test.tolist()})
    print(f"K={net.ds.K} N={net.ds.N} dims={net.ds.dims.tolist()}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    net = experiments.build_network(cfg)
    t = cfg.train
    rho = 0.0 if t.algorithm == "noncoop" else t.rho
    hp = experiments.hyperparams(t, rho=rho)
    state, record = experiments.train_network(net, t.algorithm, hp)
    out = _outdir(cfg)
    record.to_csv(out / "run.csv")
    save_state(state, out / "state.json")
    summary = experiments.summarize(net, state, record)
    summary["config"] = dataclasses.asdict(cfg)
    summary["config"].pop("out")
    _dump(out / "summary.json", summary)
    print(json.dumps(summary.get("final_test_error", {})))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    net = experiments.build_network(cfg)
    out = _outdir(cfg)
    state_path = Path(args.state) if args.state else out / "state.json"
    if not state_path.exists():
        raise experiments.MissingDataError(f"state file not found: {state_path}")
    state = load_state(state_path)
    if not np.array_equal(state.dims, net.ds.dims):
        raise ConfigError("state", "weight dimensions do not match the dataset")
    idx = net.split.test if len(net.split.test) else net.split.train
    doc = {}
    for rule in ("linear", "neighborhood"):
        per_agent, avg = evaluate(state, net.ds, idx, net.cm, rule)
        doc[rule] = {"average": avg, "per_agent": per_agent.tolist()}
    _dump(out / "eval.json", doc)
    print(json.dumps({r: doc[r]["average"] for r in doc}))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    if cfg.train.eta <= 0:
        raise ConfigError("train.eta", "diagnostics need eta > 0: the cost is not strongly "
                          "convex without the l2 term, so the convergence bound does not apply")
    report, mean, stderr = experiments.diagnose(cfg)
    out = _outdir(cfg)
    write_msd_csv(out / "msd.csv", mean, stderr)
    _dump(out / "diagnostics.json", report)
    print(json.dumps(report["bound_check"]))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = _config(args) if args.config else None
    out = Path(args.out if args.out else (cfg.out if cfg else "out")) / args.name
    if args.name not in experiments.EXPERIMENTS:
        raise ConfigError("name", f"unknown experiment; valid names: "
                          f"{', '.join(experiments.EXPERIMENTS)}")
    if args.manifest and not Path(args.manifest).exists():
        raise experiments.MissingDataError(f"dataset manifest not found: {args.manifest}")
    seeds = None
    if args.seeds is not None:
        base = args.seed or 0
        seeds = list(range(base, base + args.seeds))
    elif args.seed is not None:
        seeds = [args.seed]
    report, curves = experiments.run_canned(args.name, seeds, manifest=args.manifest)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "report.json", report)
    labels = [k for k in curves if k not in ("iter", "pass_boundaries")]
    bounds = curves["pass_boundaries"]
    with open(out / "curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "pass"] + labels)
        for j, it in enumerate(curves["iter"]):
            p = 1 + sum(it > b for b in bounds)
            writer.writerow([int(it), p] + [repr(float(curves[lab][j])) for lab in labels])
    if "note" in report:
        print(report["note"])
    print(json.dumps({"final_test_error": report["final_test_error"],
                      "verdict": report["verdict"]}, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netsmooth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed for graph, data, split and training")
        return p

    common(sub.add_parser("gen-graph", help="write graph JSON, weights and Laplacian CSV"))
    common(sub.add_parser("gen-data", help="export the dataset as manifest + CSV"))
    for name, helptext in (("train", "train one network classifier"),
                           ("diagnose", "convergence diagnostics against the reference optimum")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--paper-literal-alg1", action="store_true",
                       help="use the listing's g' = g - mu*rho*(...) coupling")
        p.add_argument("--grad-mode", choices=("own-term", "full"))
    p = common(sub.add_parser("eval", help="evaluate a saved state on the test split"))
    p.add_argument("--state", help="state JSON (default: <out>/state.json)")
    p = common(sub.add_parser("reproduce", help="run a canned experiment"))
    p.add_argument("name", help=", ".join(experiments.EXPERIMENTS))
    p.add_argument("--seeds", type=int, help="number of seeds (starting at --seed or 0)")
    p.add_argument("--manifest", help="external dataset manifest for weather-shape")
    return parser


COMMANDS = {
    "gen-graph": cmd_gen_graph,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergedError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except experiments.MissingDataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MISSING
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
