from __future__ import annotations

from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from sqlalchemy import func
from sqlalchemy.orm import Session
from starlette.exceptions import HTTPException as StarletteHTTPException

from app.db import SessionLocal, init_db
from app.models import Run, Sweep, VerifyReport
from app.schemas import MetaOut, MetricsRecord, RunOut, SweepOut, SweepRowOut, VerifyOut
from app.services.metrics import read_metrics_csv
from app.services.registry import list_runs, sweep_summary

app = FastAPI(title="Coop EDL results", description="Runs, sweeps and verification reports")


@app.on_event("startup")
def startup() -> None:
    init_db()


@app.exception_handler(StarletteHTTPException)
def http_exception_handler(request: Request, exc: StarletteHTTPException) -> JSONResponse:
    return JSONResponse({"detail": exc.detail}, status_code=exc.status_code)


@app.exception_handler(Exception)
def unhandled_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    return JSONResponse({"detail": str(exc)}, status_code=500)


def get_db() -> Session:
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def _get_or_404(db: Session, model, item_id: int, what: str):
    item = db.get(model, item_id)
    if item is None:
        raise HTTPException(status_code=404, detail=f"{what} {item_id} not found")
    return item


@app.get("/api/meta", response_model=MetaOut)
def api_meta(db: Session = Depends(get_db)) -> MetaOut:
    last_run = db.query(Run).order_by(Run.started_at.desc()).first()
    run_count = db.query(func.count(Run.id)).scalar() or 0
    return MetaOut(
        last_run_time=(last_run.finished_at or last_run.started_at) if last_run else None,
        number_of_runs=run_count,
    )


@app.get("/api/runs", response_model=list[RunOut])
def api_runs(
    env: str | None = None,
    variant: str | None = None,
    sweep_id: int | None = None,
    sort: str | None = None,
    limit: int = 100,
    offset: int = 0,
    db: Session = Depends(get_db),
) -> list[RunOut]:
    runs = list_runs(db, env=env, variant=variant, sweep_id=sweep_id, sort=sort, limit=limit, offset=offset)
    return [RunOut.model_validate(run) for run in runs]


@app.get("/api/runs/{run_id}", response_model=RunOut)
def api_run(run_id: int, db: Session = Depends(get_db)) -> RunOut:
    return RunOut.model_validate(_get_or_404(db, Run, run_id, "run"))


@app.get("/api/runs/{run_id}/metrics", response_model=list[MetricsRecord])
def api_run_metrics(run_id: int, db: Session = Depends(get_db)) -> list[MetricsRecord]:
    run = _get_or_404(db, Run, run_id, "run")
    path = Path(run.metrics_path)
    if not path.is_file():
        raise HTTPException(status_code=404, detail=f"metrics file {path} not found")
    return read_metrics_csv(path)


@app.get("/api/sweeps", response_model=list[SweepOut])
def api_sweeps(db: Session = Depends(get_db)) -> list[SweepOut]:
    sweeps = db.query(Sweep).order_by(Sweep.created_at.desc(), Sweep.id.desc()).all()
    return [SweepOut.model_validate(sweep) for sweep in sweeps]


@app.get("/api/sweeps/{sweep_id}", response_model=list[SweepRowOut])
def api_sweep(sweep_id: int, db: Session = Depends(get_db)) -> list[SweepRowOut]:
    _get_or_404(db, Sweep, sweep_id, "sweep")
    return sweep_summary(db, sweep_id)


@app.get("/api/verify", response_model=list[VerifyOut])
def api_verify(db: Session = Depends(get_db)) -> list[VerifyOut]:
    reports = db.query(VerifyReport).order_by(VerifyReport.created_at.desc(), VerifyReport.id.desc()).all()
    return [VerifyOut.model_validate(report) for report in reports]
