from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from app.schemas import EnvKind, RunConfig
from app.services.checkpoint import save_network
from app.services.envs.base import Environment
from app.services.envs.cartpole import CartPole
from app.services.envs.gridworld import gridworld_new
from app.services.metrics import write_metrics_csv
from app.services.trainer import TrainingResult, run_training

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"


@dataclass
class ExperimentOutcome:
    result: TrainingResult
    metrics_path: Path
    checkpoint_paths: list[Path] = field(default_factory=list)
    started_at: datetime = field(default_factory=datetime.utcnow)


def make_environment(run_config: RunConfig) -> Environment:
    if run_config.env is EnvKind.CARTPOLE:
        return CartPole()
    return gridworld_new(
        run_config.grid_width,
        run_config.grid_height,
        goal_cell=run_config.goal_cell,
        step_reward=run_config.step_reward,
        goal_reward=run_config.goal_reward,
        slip_prob=run_config.slip_prob,
        start_cell=run_config.start_cell,
    )


def run_experiment(run_config: RunConfig, out_dir: Path | None = None) -> ExperimentOutcome:
    started_at = datetime.utcnow()
    out = Path(out_dir) if out_dir is not None else Path(run_config.out)
    env = make_environment(run_config)
    result = run_training(
        run_config.trainer,
        env,
        image_h=run_config.image_h,
        image_w=run_config.image_w,
        image_m=run_config.image_m,
    )
    metrics_path = out / METRICS_FILE
    write_metrics_csv(metrics_path, result.records)
    checkpoint_paths = []
    for name, params in result.checkpoints().items():
        path = out / f"{name}.edln"
        save_network(path, params)
        checkpoint_paths.append(path)
    logger.info("wrote %d metric rows to %s", len(result.records), metrics_path)
    return ExperimentOutcome(
        result=result,
        metrics_path=metrics_path,
        checkpoint_paths=checkpoint_paths,
        started_at=started_at,
    )
