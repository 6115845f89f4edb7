"""Command-line entry point: ``dyadic-bloom {identities,bmo-equiv,sweep}``.

Exit codes: 0 pass, 1 violation, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

from .experiments import (
    SWEEP_TARGETS,
    ConfigError,
    ExperimentConfig,
    run_bmo_equiv,
    run_identities,
    run_sweep,
)
from .grid import GridError

OUT_ENV = "DYADIC_BLOOM_OUT"
DEFAULT_OUT = "results"

log = logging.getLogger("dyadic_bloom")


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _dumps(obj, **kw) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, allow_nan=False, **kw)


def write_jsonl(path: Path, records) -> None:
    with open(path, "w", newline="\n") as fh:
        for r in records:
            fh.write(_dumps(r) + "\n")


def write_json(path: Path, obj) -> None:
    path.write_text(_dumps(obj, indent=2) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--format", choices=("csv", "json"), help="table format")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--dim", type=int, help="dimension n")
    common.add_argument("--depth", type=int, help="grid depth K")
    common.add_argument("--depths", type=int, nargs="+", help="run at several depths")
    common.add_argument("--p", type=float, help="exponent p")
    common.add_argument("--trials", type=int, help="instances per depth")
    common.add_argument("--tol", type=float, help="identity tolerance (max norm)")
    common.add_argument("--jobs", type=int, help="worker threads for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="dyadic-bloom", description="Reproducible dyadic harmonic analysis experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    ids = sub.add_parser("identities", parents=[common], help="exact operator identities")
    ids.add_argument("--suite", action="append", help="restrict to named suites")
    sub.add_parser("bmo-equiv", parents=[common], help="Bloom BMO seven-quantity report")
    sw = sub.add_parser("sweep", parents=[common], help="bounded-ratio inequality sweep")
    sw.add_argument("--target", required=True, choices=SWEEP_TARGETS)
    return ap


def load_config(args) -> ExperimentConfig:
    base = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    d = base.to_dict()
    overrides = {
        "seed": args.seed, "p": args.p, "trials": args.trials, "tol": args.tol,
        "format": args.format, "jobs": args.jobs, "depths": args.depths,
    }
    d.update({k: v for k, v in overrides.items() if v is not None})
    if args.dim is not None:
        d["grid"]["n"] = args.dim
    if args.depth is not None:
        d["grid"]["K"] = args.depth
    return ExperimentConfig.from_dict(d)


def out_dir(args, cfg: ExperimentConfig) -> Path:
    path = Path(args.out or cfg.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_identities(cfg, out: Path, suites=None) -> int:
    records, summary = run_identities(cfg, suites)
    write_jsonl(out / "identities.jsonl", records)
    summary["config"] = cfg.to_dict()
    write_json(out / "identities_summary.json", summary)
    print(f"identities: {summary['records']} checks, {summary['violations']} violations")
    return 1 if summary["violations"] else 0


EQUIV_COLUMNS = ["instance", "K", "p", "ap_mu", "ap_lam", "q_bmo2_nu", "q_pi_lp", "q_pistar_lp",
                 "q_pi_l2_nu", "q_pistar_l2_nu", "q_para_l2_nu", "q_b1", "q_b2", "q_bmo_nu"]


def cmd_bmo_equiv(cfg, out: Path) -> int:
    records, summary = run_bmo_equiv(cfg)
    write_jsonl(out / "bmo_equiv.jsonl", records)
    if cfg.format == "csv":
        with open(out / "bmo_equiv.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EQUIV_COLUMNS)
            for r in records:
                w.writerow([format(r[c], ".17g") if isinstance(r[c], float) else r[c] for c in EQUIV_COLUMNS])
    else:
        write_json(out / "bmo_equiv.json", [{c: r[c] for c in EQUIV_COLUMNS} for r in records])
    summary["config"] = cfg.to_dict()
    write_json(out / "bmo_equiv_summary.json", summary)
    print(f"bmo-equiv: {summary['instances']} instances, {summary['mixed_zero_instances']} mixed-zero rows")
    return 1 if summary["mixed_zero_instances"] else 0


def cmd_sweep(cfg, out: Path, target: str) -> int:
    reports, summary = run_sweep(cfg, target)
    log_records = []
    bad = 0
    for K, rep in zip(cfg.all_depths, reports):
        stem = f"sweep_{target}_K{K}"
        if cfg.format == "csv":
            with open(out / f"{stem}.csv", "w", newline="") as fh:
                rep.to_csv(fh)
        else:
            write_json(out / f"{stem}.json", rep.rows)
        for row in rep.rows:
            log_records.append({"module": "norm-estimation", "operation": "inequality_sweep",
                                "target": target, **row})
            if not math.isfinite(row["ratio"]):
                bad += 1
    write_jsonl(out / f"sweep_{target}.jsonl", log_records)
    summary["nonfinite_ratios"] = bad
    summary["config"] = cfg.to_dict()
    write_json(out / f"sweep_{target}_summary.json", summary)
    print(f"sweep {target}: max ratio {summary['max_ratio']}, {bad} non-finite ratios")
    return 1 if bad else 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = out_dir(args, cfg)
        if args.command == "identities":
            if args.suite:
                from .experiments import IDENTITY_SUITES

                unknown = set(args.suite) - set(IDENTITY_SUITES)
                if unknown:
                    raise ConfigError(f"unknown suites {sorted(unknown)}")
            return cmd_identities(cfg, out, args.suite)
        if args.command == "bmo-equiv":
            return cmd_bmo_equiv(cfg, out)
        return cmd_sweep(cfg, out, args.target)
    except (ConfigError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
