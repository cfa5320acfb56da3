"""Command-line entry point.

Subcommands:
  run           execute one policy over a configured workload
  compare       execute several policies over the identical workload
  gen-workload  materialise a workload's dataset metadata as JSON
  selftest      quick built-in invariant battery

Exit codes: 0 success, 2 config validation failure, 3 runtime numeric
failure, 1 anything else (including a failed selftest).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import from_dict, load_config, parse_policy
from .errors import ConfigError, NumericError
from .harness import build_dataset, compare, run
from .report import write_report, write_request_csv, write_round_csv
from .workload import export_dataset_json

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    report = run(cfg)
    print(
        f"policy={report.policy} seed={report.seed} "
        f"avg_accuracy={report.avg_inference_accuracy:.4f} "
        f"time={report.total_time:.4f} energy={report.total_energy:.4f} "
        f"rounds={report.round_count}"
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_report(report, out / "report.json")
        write_request_csv(report, out / "requests.csv")
        write_round_csv(report, out / "rounds.csv")
        print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    policies = [parse_policy(p) for p in args.policies.split(",") if p.strip()]
    reports = compare(cfg, policies)
    header = f"{'policy':<12} {'accuracy':>9} {'time':>12} {'energy':>12} {'rounds':>7} {'gflops':>10}"
    print(header)
    for rep in reports:
        print(
            f"{rep.policy:<12} {rep.avg_inference_accuracy:>9.4f} "
            f"{rep.total_time:>12.4f} {rep.total_energy:>12.4f} "
            f"{rep.round_count:>7d} {(rep.total_flops + rep.total_cka_flops) / 1e9:>10.3f}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [
            {
                "policy": rep.policy,
                "avg_inference_accuracy": rep.avg_inference_accuracy,
                "total_time": rep.total_time,
                "total_energy": rep.total_energy,
                "round_count": rep.round_count,
                "total_flops": rep.total_flops,
                "total_cka_flops": rep.total_cka_flops,
            }
            for rep in reports
        ]
        with open(out / "comparison.json", "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "comparison.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        for rep in reports:
            write_report(rep, out / f"report_{rep.policy.replace(':', '_')}.json")
        print(f"wrote {out / 'comparison.json'}")
    return EXIT_OK


def _cmd_gen_workload(args: argparse.Namespace) -> int:
    with open(args.spec) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"workload spec is not valid JSON: {exc}") from None
    # accept either a full run config or a bare workload section
    if "workload" not in doc and any(k in doc for k in ("scenario_count", "train_batches_per_scenario")):
        doc = {"workload": doc}
    cfg = from_dict(doc)
    dataset = build_dataset(cfg)
    export_dataset_json(dataset, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_selftest(_args: argparse.Namespace) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_GENERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgecl", description="edge continual-learning scheduling simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one policy")
    p_run.add_argument("--config", required=True, help="JSON run config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="directory for report.json and CSVs")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several policies on one workload")
    p_cmp.add_argument("--config", required=True, help="JSON run config")
    p_cmp.add_argument(
        "--policies",
        required=True,
        help="comma list, e.g. immediate,static:20,lazytune,simfreeze,etuner",
    )
    p_cmp.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_cmp.add_argument("--out", default=None, help="directory for comparison output")
    p_cmp.set_defaults(func=_cmd_compare)

    p_gen = sub.add_parser("gen-workload", help="export workload dataset metadata")
    p_gen.add_argument("--spec", required=True, help="workload spec JSON")
    p_gen.add_argument("--out", required=True, help="output JSON path")
    p_gen.set_defaults(func=_cmd_gen_workload)

    p_self = sub.add_parser("selftest", help="run the built-in invariant battery")
    p_self.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"diagnostics: {json.dumps(exc.diagnostics, sort_keys=True)}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
