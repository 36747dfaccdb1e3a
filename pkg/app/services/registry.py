from __future__ import annotations

import logging
from datetime import datetime
from pathlib import Path
from typing import Sequence

from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session

from app.db import init_db as _create_tables
from app.models import Run, Sweep, VerifyReport
from app.schemas import RunConfig, SweepRowOut
from app.services.theory import TheoryReport
from app.services.trainer import TrainingResult

logger = logging.getLogger(__name__)


def init_db(bind: Engine | None = None) -> None:
    _create_tables(bind)


def _join(values: Sequence[object]) -> str:
    return ",".join(str(value) for value in values)


def record_run(
    session: Session,
    run_config: RunConfig,
    result: TrainingResult,
    metrics_path: Path,
    checkpoint_paths: Sequence[Path] = (),
    sweep_id: int | None = None,
    sweep_value: float | None = None,
    started_at: datetime | None = None,
    status: str = "ok",
) -> Run:
    records = result.records
    last = records[-1] if records else None
    run = Run(
        sweep_id=sweep_id,
        env=run_config.env.value,
        variant=result.variant.value,
        seed=run_config.trainer.seed,
        obs_mode=run_config.trainer.obs_mode.value,
        episodes=len(records),
        total_steps=result.total_steps,
        final_return=last.episode_return if last else None,
        final_mean100=last.mean100 if last else None,
        final_std100=last.std100 if last else None,
        final_qdiff=last.qdiff if last else None,
        initial_qdiff=records[0].qdiff if records else None,
        sweep_value=sweep_value,
        metrics_path=str(metrics_path),
        checkpoint_paths=_join(checkpoint_paths),
        config_json=run_config.model_dump_json(),
        status=status,
        started_at=started_at or datetime.utcnow(),
        finished_at=datetime.utcnow(),
    )
    session.add(run)
    session.commit()
    logger.debug("recorded run %d (%s seed %d)", run.id, run.variant, run.seed)
    return run


def record_sweep(
    session: Session,
    parameter: str,
    values: Sequence[float],
    seeds: Sequence[int],
) -> Sweep:
    sweep = Sweep(parameter=parameter, values=_join(values), seeds=_join(seeds))
    session.add(sweep)
    session.commit()
    logger.debug("recorded sweep %d over %s", sweep.id, parameter)
    return sweep


def record_verify(
    session: Session,
    report: TheoryReport,
    trials: int,
    seed: int,
    tolerance: float | None,
    path: Path,
) -> VerifyReport:
    row = VerifyReport(
        trials=trials,
        seed=seed,
        tolerance=tolerance,
        passed=report.passed,
        failed_suites=_join(report.failed_suites),
        report_path=str(path),
    )
    session.add(row)
    session.commit()
    logger.debug("recorded verify report %d", row.id)
    return row


def list_runs(
    session: Session,
    env: str | None = None,
    variant: str | None = None,
    sweep_id: int | None = None,
    sort: str | None = None,
    limit: int = 100,
    offset: int = 0,
) -> list[Run]:
    query = session.query(Run)
    if env:
        query = query.filter(Run.env == env)
    if variant:
        query = query.filter(Run.variant == variant)
    if sweep_id is not None:
        query = query.filter(Run.sweep_id == sweep_id)
    if (sort or "started_desc") == "mean100_desc":
        query = query.order_by(Run.final_mean100.desc().nullslast(), Run.id.asc())
    else:
        query = query.order_by(Run.started_at.desc(), Run.id.desc())
    return query.offset(offset).limit(limit).all()


def sweep_summary(session: Session, sweep_id: int) -> list[SweepRowOut]:
    runs = (
        session.query(Run)
        .filter(Run.sweep_id == sweep_id)
        .order_by(Run.sweep_value.asc(), Run.seed.asc(), Run.id.asc())
        .all()
    )
    return [
        SweepRowOut(
            value=run.sweep_value if run.sweep_value is not None else 0.0,
            seed=run.seed,
            variant=run.variant,
            mean100=run.final_mean100,
        )
        for run in runs
    ]
