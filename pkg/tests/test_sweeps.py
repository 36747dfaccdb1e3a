from __future__ import annotations

from pathlib import Path

import numpy as np

from app.config import load_run_config, replace_trainer
from app.services.sweeps import buffer_cells, run_sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEEDS = [0, 1, 2, 3, 4]


def small_buffer_mean(variant: str, tmp_path: Path) -> float:
    base = replace_trainer(load_run_config(CONFIGS / "gridworld_buffer.cfg"), variant=variant)
    result = run_sweep(buffer_cells(base, [250], SEEDS, tmp_path / variant), tmp_path / variant)
    assert [row.seed for row in result.rows] == SEEDS
    assert all(row.variant == variant for row in result.rows)
    return float(np.mean([row.mean100 for row in result.rows]))


def test_small_buffer_coop_is_not_worse_than_edql(tmp_path: Path) -> None:
    coop = small_buffer_mean("coop", tmp_path)
    edql = small_buffer_mean("edql", tmp_path)
    assert coop >= edql
    assert 0.0 <= coop <= 1.0


def test_buffer_cells_cover_every_value_and_seed(tmp_path: Path) -> None:
    base = load_run_config(CONFIGS / "gridworld_buffer.cfg")
    cells = buffer_cells(base, [250, 1000], [0, 1], tmp_path)
    assert [(cell.value, cell.seed) for cell in cells] == [(250.0, 0), (250.0, 1), (1000.0, 0), (1000.0, 1)]
    assert {cell.run_config.trainer.buffer_capacity for cell in cells} == {250, 1000}
    assert cells[3].out_dir == tmp_path / "buffer_1000" / "seed_1"
