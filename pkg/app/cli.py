from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Callable, Sequence

from sqlalchemy.orm import Session

from app.config import default_jobs, load_run_config, replace_trainer
from app.errors import ConfigError, CoopEdlError
from app.services.sweeps import (
    DEFAULT_BUFFER_VALUES,
    DEFAULT_EXPLORATION_VALUES,
    SweepResult,
    buffer_cells,
    exploration_cells,
    run_sweep,
)

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _float_list(raw: str) -> list[float]:
    try:
        return [float(item) for item in raw.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {raw!r}") from exc


def _int_list(raw: str) -> list[int]:
    try:
        return [int(item) for item in raw.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {raw!r}") from exc


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT)


def _record(no_registry: bool, action: Callable[[Session], object]) -> None:
    if no_registry:
        return
    from app.db import SessionLocal, init_db

    try:
        init_db()
        session = SessionLocal()
        try:
            action(session)
        finally:
            session.close()
    except Exception as exc:  # noqa: BLE001
        logger.warning("registry write failed: %s", exc)


def cmd_train(args: argparse.Namespace) -> int:
    from app.services.experiment import run_experiment
    from app.services.registry import record_run

    run_config = load_run_config(args.config)
    if args.seed is not None:
        run_config = replace_trainer(run_config, seed=args.seed)
    out = Path(args.out) if args.out else Path(run_config.out)
    outcome = run_experiment(run_config, out)
    records = outcome.result.records
    if records:
        last = records[-1]
        print(f"{len(records)} episodes, final mean100 {last.mean100:.6g} (std {last.std100:.6g})")
    _record(
        args.no_registry,
        lambda session: record_run(
            session,
            run_config,
            outcome.result,
            outcome.metrics_path,
            outcome.checkpoint_paths,
            started_at=outcome.started_at,
        ),
    )
    return EXIT_OK


def _record_sweep(args: argparse.Namespace, result: SweepResult, values: Sequence[float], seeds: Sequence[int]) -> None:
    from app.services.registry import record_run, record_sweep

    def action(session: Session) -> None:
        sweep = record_sweep(session, result.parameter, values, seeds)
        for cell, outcome in result.cells:
            record_run(
                session,
                cell.run_config,
                outcome.result,
                outcome.metrics_path,
                outcome.checkpoint_paths,
                sweep_id=sweep.id,
                sweep_value=cell.value,
                started_at=outcome.started_at,
            )

    _record(args.no_registry, action)


def _print_summary(result: SweepResult) -> None:
    for row in result.rows:
        mean100 = "-" if row.mean100 is None else f"{row.mean100:.6g}"
        print(f"{result.parameter}={row.value:g} seed={row.seed} {row.variant}: mean100 {mean100}")
    print(f"summary written to {result.summary_path}")


def _sweep_setup(args: argparse.Namespace):
    run_config = load_run_config(args.config)
    seeds = args.seeds if args.seeds else [run_config.trainer.seed]
    out_root = Path(args.out) if args.out else Path(run_config.out)
    jobs = args.jobs if args.jobs is not None else default_jobs()
    if jobs < 1:
        raise ConfigError(f"must be positive, got {jobs}", key="jobs")
    return run_config, seeds, out_root, jobs


def cmd_sweep_buffer(args: argparse.Namespace) -> int:
    run_config, seeds, out_root, jobs = _sweep_setup(args)
    values = args.values or list(DEFAULT_BUFFER_VALUES)
    if any(value < 1 for value in values):
        raise ConfigError("buffer sizes must be positive", key="values")
    result = run_sweep(buffer_cells(run_config, values, seeds, out_root), out_root, jobs)
    _print_summary(result)
    _record_sweep(args, result, values, seeds)
    return EXIT_OK


def cmd_sweep_exploration(args: argparse.Namespace) -> int:
    run_config, seeds, out_root, jobs = _sweep_setup(args)
    values = sorted(args.values if args.values else DEFAULT_EXPLORATION_VALUES)
    if any(value < 0.0 for value in values):
        raise ConfigError("exploration rates must be non-negative", key="values")
    result = run_sweep(exploration_cells(run_config, values, seeds, out_root), out_root, jobs)
    _print_summary(result)
    _record_sweep(args, result, values, seeds)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from app.services.registry import record_verify
    from app.services.theory import run_all_suites, write_report_csv

    if args.trials < 1:
        raise ConfigError(f"must be at least 1, got {args.trials}", key="trials")
    if args.tol is not None and args.tol < 0.0:
        raise ConfigError(f"must be non-negative, got {args.tol}", key="tol")
    report = run_all_suites(args.trials, args.seed, args.tol)
    print(f"{'suite':<12} {'passed':>8} {'trials':>8} {'required':>9}  result")
    for summary in report.summaries:
        verdict = "PASS" if summary.ok else "FAIL"
        print(
            f"{summary.name:<12} {summary.passed:>8} {summary.trials:>8} "
            f"{summary.required_fraction:>9.0%}  {verdict}"
        )
    path = Path(args.out)
    write_report_csv(path, report)
    print(f"report written to {path}")
    _record(
        args.no_registry,
        lambda session: record_verify(session, report, args.trials, args.seed, args.tol, path),
    )
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coop-edl", description="Cooperative dual-network EDL Q-learning")
    parser.add_argument("--log-level", default=os.environ.get("COOP_EDL_LOG_LEVEL", "INFO"))
    parser.add_argument("--no-registry", action="store_true", help="skip writing the SQLite run registry")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="run one training experiment")
    train.add_argument("--config", type=Path, required=True)
    train.add_argument("--seed", type=int)
    train.add_argument("--out")
    train.set_defaults(handler=cmd_train)

    for name, handler, value_type, helptext in (
        ("sweep-buffer", cmd_sweep_buffer, _int_list, "sweep the replay buffer capacity"),
        ("sweep-exploration", cmd_sweep_exploration, _float_list, "sweep the singular-value perturbation scale"),
    ):
        sweep = commands.add_parser(name, help=helptext)
        sweep.add_argument("--config", type=Path, required=True)
        sweep.add_argument("--values", type=value_type)
        sweep.add_argument("--seeds", type=_int_list)
        sweep.add_argument("--jobs", type=int)
        sweep.add_argument("--out")
        sweep.set_defaults(handler=handler)

    verify = commands.add_parser("verify", help="numerically check the convergence analysis")
    verify.add_argument("--trials", type=int, default=100)
    verify.add_argument("--tol", type=float)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", default="runs/verify/report.csv")
    verify.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CoopEdlError, OSError, ArithmeticError, ValueError) as exc:
        logger.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        logger.exception("unexpected failure")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
