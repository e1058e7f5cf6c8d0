"""Command-line interface.

Subcommands
-----------
run <config.yaml>
    Run the federated simulation described by a YAML config: one CSV of
    per-round metrics per (arm, seed), plus an aggregate summary (CSV and
    JSON).  Re-running a config rewrites identical bytes except for the
    summary timestamp, which ``--no-timestamp`` omits.
verify <suite>
    Run a numeric verification battery (roundtrip, lemma1, lemma2,
    theorem1, appendixB) and print one PASS/FAIL line per check.
accountant
    Solve a Rényi budget for the required end-to-end flip probability.
kappa-estimate <checkpoint-dir>
    Estimate mean bit-level sensitivity from saved ``.npy`` checkpoints.

Exit codes: 0 success, 1 a verification check failed, 2 configuration or
usage error.  The default output directory is taken from
``BITFLIPDP_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import accountant, flsim, perturb, verify

ENV_OUTPUT_DIR = "BITFLIPDP_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

_ROUND_COLUMNS = [
    "arm", "mechanism", "lam", "epsilon", "seed", "round", "iteration",
    "loss", "accuracy", "mean_ber", "packets_dropped", "distance_sq",
    "divergent",
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitflipdp",
        description="Bit-flipping differential privacy for federated learning "
                    "over noisy channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a simulation config")
    p_run.add_argument("config", help="YAML experiment configuration")
    p_run.add_argument("--output-dir", default=None,
                       help=f"output directory (default: ${ENV_OUTPUT_DIR} or ./results)")
    p_run.add_argument("--no-timestamp", action="store_true",
                       help="omit the timestamp field from summary.json")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run a numeric verification suite")
    p_verify.add_argument("suite", choices=sorted(verify.SUITES))
    p_verify.set_defaults(func=cmd_verify)

    p_acc = sub.add_parser("accountant",
                           help="required flip probability for a Rényi budget")
    p_acc.add_argument("--lambda", dest="lam", type=float, required=True,
                       help="Rényi order (> 1)")
    p_acc.add_argument("--epsilon", type=float, required=True,
                       help="total privacy budget")
    p_acc.add_argument("--rounds", type=int, required=True,
                       help="aggregation rounds the budget is split across")
    p_acc.add_argument("--kappa-bar", type=float, required=True,
                       help="mean bit-level sensitivity")
    p_acc.add_argument("--json", action="store_true", help="emit JSON")
    p_acc.set_defaults(func=cmd_accountant)

    p_kappa = sub.add_parser("kappa-estimate",
                             help="estimate bit-level sensitivity from checkpoints")
    p_kappa.add_argument("checkpoints",
                         help="directory of .npy model checkpoints")
    p_kappa.add_argument("--sensitivity", type=float, required=True,
                         help="L2 perturbation radius (classical sensitivity)")
    p_kappa.add_argument("--samples", type=int, default=10000,
                         help="perturbation draws per checkpoint (default 10000)")
    p_kappa.add_argument("--nu-inf", type=float, default=None,
                         help="value-range bound (default: inferred from checkpoints)")
    p_kappa.add_argument("--seed", type=int, default=0)
    p_kappa.set_defaults(func=cmd_kappa_estimate)
    return parser


def _resolve_output_dir(arg_value) -> Path:
    if arg_value:
        return Path(arg_value)
    env = os.environ.get(ENV_OUTPUT_DIR)
    if env:
        return Path(env)
    return Path("results")


def _fmt(value) -> str:
    """Locale-independent cell formatting (full float precision)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except yaml.YAMLError as exc:
        print(f"error: invalid YAML: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        config = flsim.ExperimentConfig.from_dict(raw or {})
    except (ValueError, TypeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    result = flsim.run_experiment(config)
    outdir = _resolve_output_dir(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    written = []
    for (arm_name, seed), arm_result in sorted(result.arm_results.items()):
        fname = outdir / f"{arm_name}_seed{seed}.csv"
        with open(fname, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_ROUND_COLUMNS)
            arm = arm_result.arm
            for rec in arm_result.records:
                writer.writerow([_fmt(v) for v in (
                    arm.name, arm.mechanism.value,
                    "" if arm.lam is None else arm.lam,
                    "" if arm.epsilon is None else arm.epsilon,
                    seed, rec.round, rec.iteration, rec.loss, rec.accuracy,
                    rec.mean_ber, rec.packets_dropped, rec.distance_sq,
                    rec.divergent,
                )])
        written.append(fname)

    rows = result.summary_rows()
    summary_csv = outdir / "summary.csv"
    with open(summary_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    written.append(summary_csv)

    payload = {
        "config": dataclasses.asdict(config),
        "summary": rows,
    }
    if not args.no_timestamp:
        payload["timestamp"] = datetime.now(timezone.utc).isoformat()
    summary_json = outdir / "summary.json"
    summary_json.write_text(json.dumps(payload, indent=2, default=_json_default)
                            + "\n")
    written.append(summary_json)

    oversat = sum(row["oversatisfied_uploads"] for row in rows)
    if oversat:
        print(f"warning: privacy over-satisfied in {oversat} uploads "
              "(channel BER exceeded the flip target; artificial flips were "
              "skipped, convergence at risk)", file=sys.stderr)
    divergent = sum(row["divergent_runs"] for row in rows)
    if divergent:
        print(f"warning: {divergent} runs recorded non-finite models "
              "(divergence flagged in summary)", file=sys.stderr)

    for row in rows:
        print(f"{row['arm']:<40} acc {row['mean_final_accuracy']:.4f} "
              f"+/- {row['std_final_accuracy']:.4f}  "
              f"divergent {row['divergent_runs']}/{row['seeds']}")
    print(f"wrote {len(written)} files to {outdir}")
    return EXIT_OK


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)!r}")


def cmd_verify(args) -> int:
    checks = verify.run_suite(args.suite)
    for check in checks:
        print(check.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_accountant(args) -> int:
    try:
        budget = accountant.PrivacyBudget(args.lam, args.epsilon, args.rounds)
        p = accountant.required_ber(budget, args.kappa_bar)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    if args.json:
        print(json.dumps({
            "lambda": args.lam, "epsilon": args.epsilon, "rounds": args.rounds,
            "kappa_bar": args.kappa_bar, "required_ber": p,
        }))
    else:
        print(repr(p))
    return EXIT_OK


def cmd_kappa_estimate(args) -> int:
    directory = Path(args.checkpoints)
    files = sorted(directory.glob("*.npy"))
    if not files:
        print(f"error: no .npy checkpoints in {directory}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        rows = []
        for f in files:
            arr = np.load(f)
            rows.append(np.atleast_2d(np.asarray(arr, dtype=np.float64)))
        samples = np.concatenate(rows, axis=0)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load checkpoints: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    if args.nu_inf is not None:
        nu_inf = args.nu_inf
    else:
        peak = float(np.max(np.abs(samples)))
        if peak == 0.0:
            print("error: all-zero checkpoints; pass --nu-inf explicitly",
                  file=sys.stderr)
            return EXIT_CONFIG_ERROR
        nu = np.float32(peak)
        while float(nu) < peak:
            nu = np.nextafter(nu, np.float32(np.inf))
        nu_inf = float(nu)

    try:
        handle = perturb.RngHandle(args.seed, stage=perturb.STAGE_KAPPA_DRAW)
        estimate = accountant.estimate_kappa_bar(
            np.float32(samples), args.sensitivity, args.samples, nu_inf, handle)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(estimate.to_json())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
