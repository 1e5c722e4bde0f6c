"""Command-line entry point.

    cgdft <subcommand> --config <file> --out <dir> [--seed k] [--tol name=value]
    cgdft report <dir>

Exit codes: 0 when every asserted check passes, 1 when a check fails
(the failing checks are named on stderr), 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, apply_tolerance_overrides, config_hash, load_config
from .experiments import EXPERIMENTS, run_experiment, thread_cap
from .io import atomic_write_text, read_table, table_to_csv, write_json

log = logging.getLogger("cgdft")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgdft", description="Coarse-grained DFT experiments on a 1D few-fermion model.")
    parser.add_argument("--version", action="version", version=f"cgdft {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, default=None, help="TOML or JSON config (defaults if omitted)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="tolerance override, repeatable")
        p.add_argument("-v", "--verbose", action="store_true")
    r = sub.add_parser("report", help="summarize an artifact directory")
    r.add_argument("dir", type=Path)
    return parser


def _prefix(command: str) -> str:
    return command.replace("-", "_")


def _write_outcome(command: str, out_dir: Path, cfg, outcome, seconds: float) -> None:
    prefix = _prefix(command)
    for name, rows in outcome.tables.items():
        stem = name if name.startswith(prefix) else f"{prefix}_{name}"
        atomic_write_text(out_dir / f"{stem}.csv", table_to_csv(rows))
    for fname, text in outcome.texts.items():
        atomic_write_text(out_dir / f"{prefix}_{fname}", text)
    for name, doc in outcome.documents.items():
        write_json(out_dir / f"{prefix}_{name}.json", doc)
    checks = [c.summary() for c in outcome.checks]
    atomic_write_text(out_dir / f"{prefix}_checks.csv", table_to_csv(checks, ["check", "statement", "measured", "threshold", "passed"]))
    write_json(
        out_dir / f"{prefix}.meta.json",
        {
            "experiment": command,
            "version": __version__,
            "config": cfg.canonical(),
            "config_hash": config_hash(cfg),
            "seed": cfg.seed,
            "thresholds": cfg.tolerances.model_dump(),
            "verdicts": outcome.verdicts,
            "checks": checks,
            "passed": outcome.passed,
            "threads": thread_cap(),
            "wall_seconds": seconds,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        },
    )


def _run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        cfg = apply_tolerance_overrides(cfg, args.tol)
        thread_cap()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        outcome = run_experiment(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seconds = time.perf_counter() - start

    args.out.mkdir(parents=True, exist_ok=True)
    _write_outcome(args.command, args.out, cfg, outcome, seconds)
    width = max((len(c.name) for c in outcome.checks), default=0)
    for c in outcome.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name:<{width}}  {c.measured:.3e} (threshold {c.threshold:.3e})  {c.statement}")
    if args.command != "verify-all":  # its verdicts repeat the check lines
        for key, value in outcome.verdicts.items():
            print(f"verdict {key}: {value}")
    failed = [c.name for c in outcome.checks if not c.passed]
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def report(directory: Path, stream=None) -> int:
    """Plain-text summary of every experiment found in ``directory``."""
    if not directory.is_dir():
        print(f"error: {directory} is not a directory", file=sys.stderr)
        return EXIT_CONFIG
    metas = sorted(directory.glob("*.meta.json"))
    if not metas:
        print(f"error: no artifacts in {directory}", file=sys.stderr)
        return EXIT_CONFIG
    for meta_path in metas:
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            command = meta["experiment"]
        except (ValueError, KeyError) as exc:
            print(f"error: corrupt metadata {meta_path.name}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        prefix = _prefix(command)
        print(f"== {command}  (config {meta['config_hash'][:12]}, seed {meta['seed']})", file=stream)
        if command in ("sweep", "probe"):
            table_path = directory / f"{prefix}.csv"
            if not table_path.exists():
                print(f"error: missing {table_path.name}", file=stream)
                return EXIT_CONFIG
            rows = read_table(table_path)
            cols = [c for c in ("n", "D_n", "F_n", "dist_1", "v_sup", "monotone") if c in rows[0]]
            print("  " + "  ".join(f"{c:>12}" for c in cols), file=stream)
            for row in rows:
                print("  " + "  ".join(f"{_short(row[c]):>12}" for c in cols), file=stream)
        for key, value in meta.get("verdicts", {}).items():
            print(f"  verdict {key}: {value}", file=stream)
        for c in meta.get("checks", []):
            status = "PASS" if c["passed"] else "FAIL"
            print(f"  {status}  {c['check']}: {c['statement']}", file=stream)
        print(f"  overall: {'PASS' if meta.get('passed') else 'FAIL'}", file=stream)
    return EXIT_OK


def _short(text: str) -> str:
    try:
        return f"{float(text):.6g}"
    except ValueError:
        return text


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "report":
        return report(args.dir)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return _run(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
