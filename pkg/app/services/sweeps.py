from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from app.config import replace_trainer
from app.schemas import RunConfig, SweepRowOut, Variant
from app.services.experiment import ExperimentOutcome, run_experiment

logger = logging.getLogger(__name__)

DEFAULT_BUFFER_VALUES = (500, 1000, 1500, 2000, 3000, 3500, 4000, 5000)
DEFAULT_EXPLORATION_VALUES = (0.0, 0.01, 0.5)
SUMMARY_HEADER = ["value", "seed", "variant", "mean100"]
SUMMARY_FILE = "summary.csv"


@dataclass(frozen=True)
class SweepCell:
    parameter: str
    value: float
    seed: int
    run_config: RunConfig
    out_dir: Path


@dataclass
class SweepResult:
    parameter: str
    cells: list[tuple[SweepCell, ExperimentOutcome]]
    rows: list[SweepRowOut]
    summary_path: Path


def buffer_cells(run_config: RunConfig, values: Sequence[int], seeds: Sequence[int], out_root: Path) -> list[SweepCell]:
    return [
        SweepCell(
            parameter="buffer_capacity",
            value=float(value),
            seed=seed,
            run_config=replace_trainer(run_config, buffer_capacity=int(value), seed=seed),
            out_dir=out_root / f"buffer_{int(value)}" / f"seed_{seed}",
        )
        for value in values
        for seed in seeds
    ]


def exploration_cells(
    run_config: RunConfig,
    values: Sequence[float],
    seeds: Sequence[int],
    out_root: Path,
) -> list[SweepCell]:
    cells = []
    for value in values:
        for seed in seeds:
            updates = {"s_scale": float(value), "seed": seed}
            if value == 0.0:
                # no perturbation is the plain gradient path
                updates["variant"] = Variant.GCOOP
            cells.append(
                SweepCell(
                    parameter="s_scale",
                    value=float(value),
                    seed=seed,
                    run_config=replace_trainer(run_config, **updates),
                    out_dir=out_root / f"s_{value:g}" / f"seed_{seed}",
                )
            )
    return cells


def _run_cell(cell: SweepCell) -> ExperimentOutcome:
    logger.info("sweep cell %s=%g seed %d starting", cell.parameter, cell.value, cell.seed)
    outcome = run_experiment(cell.run_config, cell.out_dir)
    logger.info("sweep cell %s=%g seed %d finished", cell.parameter, cell.value, cell.seed)
    return outcome


def run_cells(cells: Sequence[SweepCell], jobs: int = 1) -> list[tuple[SweepCell, ExperimentOutcome]]:
    if jobs <= 1 or len(cells) <= 1:
        return [(cell, _run_cell(cell)) for cell in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        outcomes = list(pool.map(_run_cell, cells))
    return list(zip(cells, outcomes))


def summary_rows(pairs: Sequence[tuple[SweepCell, ExperimentOutcome]]) -> list[SweepRowOut]:
    rows = []
    for cell, outcome in pairs:
        records = outcome.result.records
        rows.append(
            SweepRowOut(
                value=cell.value,
                seed=cell.seed,
                variant=outcome.result.variant.value,
                mean100=records[-1].mean100 if records else None,
            )
        )
    return sorted(rows, key=lambda row: (row.value, row.seed))


def write_summary_csv(path: Path, rows: Sequence[SweepRowOut]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for row in rows:
            mean100 = "" if row.mean100 is None else f"{row.mean100:.6g}"
            writer.writerow([f"{row.value:g}", row.seed, row.variant, mean100])


def run_sweep(cells: Sequence[SweepCell], out_root: Path, jobs: int = 1) -> SweepResult:
    if not cells:
        raise ValueError("a sweep needs at least one cell")
    pairs = run_cells(cells, jobs)
    rows = summary_rows(pairs)
    summary_path = out_root / SUMMARY_FILE
    write_summary_csv(summary_path, rows)
    return SweepResult(parameter=cells[0].parameter, cells=pairs, rows=rows, summary_path=summary_path)
