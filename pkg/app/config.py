from __future__ import annotations

import os
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.errors import ConfigError
from app.schemas import RunConfig, TrainerConfig

LIST_KEYS = {"hidden", "lambdas"}
OPTIONAL_KEYS = {"goal_cell", "start_cell", "step_budget"}
TRAINER_KEYS = set(TrainerConfig.model_fields)
RUN_KEYS = set(RunConfig.model_fields) - {"trainer"}


def default_jobs() -> int:
    raw = os.environ.get("COOP_EDL_JOBS")
    if not raw:
        return 1
    try:
        jobs = int(raw)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {raw!r}", key="COOP_EDL_JOBS") from exc
    if jobs < 1:
        raise ConfigError(f"must be positive, got {jobs}", key="COOP_EDL_JOBS")
    return jobs


def _parse_value(key: str, raw: str) -> Any:
    if key in LIST_KEYS:
        return [item.strip() for item in raw.split(",") if item.strip()]
    if key in OPTIONAL_KEYS and raw.lower() in {"", "none"}:
        return None
    return raw


def parse_config_text(text: str) -> tuple[dict[str, Any], dict[str, Any]]:
    run_values: dict[str, Any] = {}
    trainer_values: dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {number} is not a 'key = value' pair")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in TRAINER_KEYS:
            target = trainer_values
        elif key in RUN_KEYS:
            target = run_values
        else:
            raise ConfigError("unknown key", key=key)
        if key in target:
            raise ConfigError("duplicate key", key=key)
        target[key] = _parse_value(key, raw)
    return run_values, trainer_values


def build_run_config(run_values: dict[str, Any], trainer_values: dict[str, Any]) -> RunConfig:
    try:
        trainer = TrainerConfig.model_validate(trainer_values)
        return RunConfig.model_validate({**run_values, "trainer": trainer})
    except ValidationError as exc:
        first = exc.errors()[0]
        key = first.get("ctx", {}).get("key") or next(
            (part for part in reversed(first["loc"]) if isinstance(part, str)), None
        )
        raise ConfigError(first["msg"], key=key) from exc


def load_run_config(path: Path) -> RunConfig:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror or exc}", key=str(path)) from exc
    return build_run_config(*parse_config_text(text))


def replace_trainer(run_config: RunConfig, **updates: Any) -> RunConfig:
    trainer_values = {**run_config.trainer.model_dump(), **updates}
    run_values = run_config.model_dump(exclude={"trainer"})
    return build_run_config(run_values, trainer_values)


def replace_run(run_config: RunConfig, **updates: Any) -> RunConfig:
    run_values = {**run_config.model_dump(exclude={"trainer"}), **updates}
    return build_run_config(run_values, run_config.trainer.model_dump())
