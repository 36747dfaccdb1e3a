from __future__ import annotations

from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from app.db import Base
from app.models import Run, VerifyReport
from app.schemas import RunConfig, SuiteSummary, TrainerConfig
from app.services.envs.gridworld import gridworld_new
from app.services.registry import list_runs, record_run, record_sweep, record_verify, sweep_summary
from app.services.theory import TheoryReport
from app.services.trainer import run_training


def create_session():
    engine = create_engine("sqlite:///:memory:", connect_args={"check_same_thread": False})
    Base.metadata.create_all(bind=engine)
    return sessionmaker(bind=engine)()


def tiny_run(seed: int, variant: str = "coop", episodes: int = 3):
    trainer = TrainerConfig(
        hidden=[4], episodes=episodes, max_steps=10, batch_size=2, seed=seed, variant=variant, toggle_period=2
    )
    run_config = RunConfig(grid_width=3, grid_height=2, trainer=trainer)
    env = gridworld_new(3, 2)
    return run_config, run_training(trainer, env)


def test_record_run_stores_final_metrics() -> None:
    session = create_session()
    run_config, result = tiny_run(seed=1)
    run = record_run(session, run_config, result, Path("runs/a/metrics.csv"), [Path("a/net1.edln"), Path("a/net2.edln")])

    stored = session.get(Run, run.id)
    assert stored.env == "gridworld"
    assert stored.variant == "coop"
    assert stored.episodes == 3
    assert stored.total_steps == result.total_steps
    assert stored.final_mean100 == result.records[-1].mean100
    assert stored.initial_qdiff == result.records[0].qdiff
    assert stored.checkpoint_paths == "a/net1.edln,a/net2.edln"
    assert RunConfig.model_validate_json(stored.config_json) == run_config


def test_record_run_without_episodes() -> None:
    session = create_session()
    run_config, result = tiny_run(seed=1, episodes=0)
    run = record_run(session, run_config, result, Path("m.csv"))
    assert run.final_mean100 is None
    assert run.initial_qdiff is None
    assert run.episodes == 0


def test_list_runs_filters_and_sorts() -> None:
    session = create_session()
    for seed, variant in ((1, "coop"), (2, "gcoop"), (3, "coop")):
        run_config, result = tiny_run(seed=seed, variant=variant)
        record_run(session, run_config, result, Path(f"runs/{seed}/metrics.csv"))
    session.query(Run).filter(Run.seed == 3).update({Run.final_mean100: 9.0})
    session.query(Run).filter(Run.seed == 1).update({Run.final_mean100: 1.0})
    session.commit()

    coop = list_runs(session, variant="coop")
    assert sorted(run.seed for run in coop) == [1, 3]
    ranked = list_runs(session, sort="mean100_desc")
    assert ranked[0].seed == 3
    assert len(list_runs(session, limit=1)) == 1
    assert list_runs(session, env="cartpole") == []


def test_sweep_summary_orders_rows() -> None:
    session = create_session()
    sweep = record_sweep(session, "buffer_capacity", [1000, 500], [0, 1])
    assert sweep.values == "1000,500"
    for value, seed in ((1000.0, 1), (500.0, 1), (1000.0, 0), (500.0, 0)):
        run_config, result = tiny_run(seed=seed)
        record_run(session, run_config, result, Path("m.csv"), sweep_id=sweep.id, sweep_value=value)

    rows = sweep_summary(session, sweep.id)
    assert [(row.value, row.seed) for row in rows] == [(500.0, 0), (500.0, 1), (1000.0, 0), (1000.0, 1)]
    assert all(row.variant == "coop" for row in rows)
    assert len(list_runs(session, sweep_id=sweep.id)) == 4


def test_record_verify() -> None:
    session = create_session()
    summary = SuiteSummary(
        name="theorem2", trials=10, passed=5, pass_fraction=0.5, required_fraction=0.99, tolerance=1e-12
    )
    report = TheoryReport(summaries=[summary])
    row = record_verify(session, report, 10, 0, None, Path("runs/verify/report.csv"))
    stored = session.get(VerifyReport, row.id)
    assert stored.passed is False
    assert stored.failed_suites == "theorem2"
    assert stored.tolerance is None
