"""Command-line interface: configuration in, reports and CSV artifacts out.

Exit codes: 0 all checks pass, 1 at least one inequality check failed,
2 a parameter hypothesis failed, 3 runtime or configuration error.

report.json and the CSV artifacts are deterministic functions of the
configuration (byte-identical across re-runs); wall-clock metadata goes to
run_meta.json, which is excluded from that contract.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from .bounds import HypothesisError, constants_report
from .campaigns import (
    asf_report,
    identities_report,
    mlh_report,
    moments_report,
    simulate_report,
)
from .config import DEFAULT_CONFIG, ConfigError, ExperimentConfig

_COMMANDS = {
    "verify-identities": identities_report,
    "verify-moments": moments_report,
    "verify-mlh": mlh_report,
    "asf-probe": asf_report,
    "simulate": simulate_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snsverify",
        description="Spectral Galerkin verification harness for 2D stochastic "
                    "Navier-Stokes with degenerate low-mode forcing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "verify-identities": "algebraic identity and certified-constant suite",
        "verify-moments": "exponential energy moment and high-mode decay checks",
        "verify-mlh": "semigroup comparison (log-Harnack type) matrix, entropy, gradient probe",
        "asf-probe": "pseudo-metric distance bounds over the (t, gamma) grid",
        "simulate": "single-path simulation with CSV dumps",
    }
    for name, h in helps.items():
        p = sub.add_parser(name, help=h)
        p.add_argument("--config", type=Path, default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", type=Path, default=Path("snsverify-out"),
                       help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="kernel thread cap (results are thread-count independent)")
    return parser


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else DEFAULT_CONFIG
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, estimators=dataclasses.replace(cfg.estimators, seed=args.seed))
    return cfg


def _write_outputs(out_dir: Path, report: dict, csvs: dict, cfg: ExperimentConfig,
                   elapsed: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    consts = constants_report(
        cfg.make_grid(), cfg.make_params(), cfg.make_noise(),
        y_norm=cfg.make_y0().norm(), z_norm=cfg.initial.separation.norm,
        p_list=cfg.estimators.p_list)
    (out_dir / "constants.json").write_text(json.dumps(consts, indent=2, sort_keys=True) + "\n")
    for name, text in csvs.items():
        (out_dir / name).write_text(text)
    meta = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "elapsed_s": elapsed,
            "argv": sys.argv[1:]}
    (out_dir / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.threads is not None:
            from .engine import set_threads

            set_threads(args.threads)
        t0 = time.time()
        report, csvs = _COMMANDS[args.command](cfg)
        _write_outputs(args.out, report, csvs, cfg, time.time() - t0)
        if report.get("pass", False):
            print(f"{args.command}: PASS  (report in {args.out})")
            return 0
        print(f"{args.command}: FAIL  (report in {args.out})")
        return 1
    except HypothesisError as exc:
        print(f"{args.command}: hypothesis failure: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{args.command}: configuration error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"{args.command}: runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
