"""Command-line experiment runner.

Subcommands: generate (synthetic CSV), run (full pipeline from a config file),
rq1..rq4 (a single section), replay (recompute reports from stored outputs).
Exit code 0 means every enabled verdict is within its threshold.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import dataio
from .errors import FedlineError
from .experiment import ExperimentConfig, run_sections, train_scenario
from .report import replay, write_run_outputs


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = cfg.with_master_seed(args.seed)
    updates = {}
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.delta is not None:
        updates["delta"] = args.delta
    if args.log_payloads:
        updates["log_payloads"] = True
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to the flat JSON config file")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed overriding every per-component seed")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--delta", type=float, default=None, help="threshold override")
    p.add_argument("--log-payloads", action="store_true",
                   help="inline message payloads into transcripts")
    p.add_argument("--figures", action="store_true",
                   help="render PNG figures alongside the CSV output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedline",
                                     description="Federated vs centralized failure prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset CSV")
    gen.add_argument("--n-samples", type=int, required=True)
    gen.add_argument("--n-features", type=int, required=True)
    gen.add_argument("--positive-fraction", type=float, required=True)
    gen.add_argument("--sparsity", type=float, default=0.0)
    gen.add_argument("--class-separation", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="destination CSV path")

    for name in ("run", "rq1", "rq2", "rq3", "rq4"):
        p = sub.add_parser(name, help="run the full pipeline" if name == "run"
                           else f"run only the {name} section")
        _add_run_flags(p)

    rep = sub.add_parser("replay", help="recompute reports from stored outputs")
    rep.add_argument("--out", required=True, help="directory of a previous run")
    rep.add_argument("--figures", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            spec = dataio.SyntheticSpec(args.n_samples, args.n_features,
                                        args.positive_fraction, args.sparsity,
                                        args.class_separation, args.seed)
            dataio.write_csv(dataio.generate_synthetic(spec), args.out)
            print(f"wrote {args.out}")
            return 0
        if args.command == "replay":
            code = replay(args.out, figures=args.figures)
            print(f"replay verdict: {'all within threshold' if code == 0 else 'NOT within threshold'}")
            return code
        cfg = _load_config(args)
        if args.command != "run":
            toggles = {f"rq{i}": (args.command == f"rq{i}") for i in range(1, 5)}
            cfg = dataclasses.replace(cfg, **toggles)
        scenario = train_scenario(cfg)
        sections = run_sections(cfg, scenario.table)
        code = write_run_outputs(scenario, sections, cfg.out_dir, figures=args.figures)
        for name, within in sections["verdicts"].items():
            print(f"{name}: {'within' if within else 'NOT within'} threshold")
        if code != 0:
            failing = [name for name, within in sections["verdicts"].items() if not within]
            print(f"failing sections: {', '.join(failing)}", file=sys.stderr)
        return code
    except FedlineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
