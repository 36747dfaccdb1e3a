from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt

from app.errors import ConfigError
from app.schemas import MetricsRecord
from app.services.network import NetworkParams, q_values

WINDOW = 100
CSV_HEADER = [
    "episode",
    "variant",
    "seed",
    "return",
    "mean100",
    "std100",
    "q1_mean",
    "q2_mean",
    "qdiff",
    "eps",
    "s_scale",
    "buffer_fill",
    "ms",
]
_INT_COLUMNS = {"episode", "seed", "buffer_fill"}


def rolling_stats(returns: Sequence[float], window: int = WINDOW) -> tuple[float, float]:
    if not returns:
        return 0.0, 0.0
    tail = np.asarray(returns[-window:], dtype=np.float64)
    return float(tail.mean()), float(tail.std())


def probe_q_stats(
    net1: NetworkParams,
    net2: NetworkParams,
    probe: npt.NDArray[np.float64],
) -> tuple[float, float, float]:
    q1 = q_values(net1, probe)
    q2 = q_values(net2, probe)
    return float(q1.mean()), float(q2.mean()), float(np.linalg.norm(q1 - q2))


def _format(value: float | int | str) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_metrics_csv(path: Path, records: Iterable[MetricsRecord]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in records:
            row = record.model_dump(by_alias=True)
            writer.writerow([_format(row[column]) for column in CSV_HEADER])


def read_metrics_csv(path: Path) -> list[MetricsRecord]:
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigError(f"unexpected metrics header {reader.fieldnames}", key=str(path))
        records = []
        for row in reader:
            values: dict[str, float | int | str] = {}
            for column in CSV_HEADER:
                if column == "variant":
                    values[column] = row[column]
                elif column in _INT_COLUMNS:
                    values[column] = int(row[column])
                else:
                    values[column] = float(row[column])
            records.append(MetricsRecord.model_validate(values))
    return records


def final_mean100(path: Path) -> float | None:
    records = read_metrics_csv(path)
    if not records:
        return None
    return records[-1].mean100
