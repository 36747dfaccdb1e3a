from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from app.errors import ConfigError
from app.schemas import MetricsRecord
from app.services.metrics import (
    CSV_HEADER,
    final_mean100,
    probe_q_stats,
    read_metrics_csv,
    rolling_stats,
    write_metrics_csv,
)
from app.services.network import ActivationKind, LayerSpec, NetworkParams


def record(episode: int, episode_return: float, mean100: float = 0.0) -> MetricsRecord:
    return MetricsRecord(
        episode=episode,
        variant="coop",
        seed=3,
        episode_return=episode_return,
        mean100=mean100,
        std100=0.5,
        q1_mean=0.125,
        q2_mean=-0.25,
        qdiff=1.0 / 3.0,
        eps=0.99,
        s_scale=0.05,
        buffer_fill=episode * 10,
        ms=12.5,
    )


def test_rolling_stats_window() -> None:
    assert rolling_stats([]) == (0.0, 0.0)
    assert rolling_stats([2.0, 4.0]) == (3.0, 1.0)
    returns = [float(value) for value in range(250)]
    mean, std = rolling_stats(returns)
    assert mean == pytest.approx(np.mean(returns[-100:]))
    assert std == pytest.approx(np.std(returns[-100:]))
    assert rolling_stats([1.0, 5.0, 9.0], window=2) == (7.0, 2.0)


def test_probe_q_stats_for_identical_networks() -> None:
    net = NetworkParams(
        specs=(LayerSpec(2, 2, ActivationKind.IDENTITY),),
        weights=(np.array([[1.0, 2.0], [3.0, 4.0]]),),
        bias=False,
    )
    q1_mean, q2_mean, qdiff = probe_q_stats(net, net, np.eye(2))
    assert q1_mean == q2_mean == 2.5
    assert qdiff == 0.0


def test_metrics_csv_header_and_format(tmp_path: Path) -> None:
    path = tmp_path / "run" / "metrics.csv"
    write_metrics_csv(path, [record(1, 10.0, 10.0), record(2, 20.0, 15.0)])
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[0] == "episode,variant,seed,return,mean100,std100,q1_mean,q2_mean,qdiff,eps,s_scale,buffer_fill,ms"
    assert lines[1] == "1,coop,3,10,10,0.5,0.125,-0.25,0.333333,0.99,0.05,10,12.5"
    assert len(lines) == 3


def test_metrics_csv_reads_back(tmp_path: Path) -> None:
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, [record(1, 10.0, 10.0), record(2, 20.0, 15.0)])
    rows = read_metrics_csv(path)
    assert [row.episode for row in rows] == [1, 2]
    assert rows[1].episode_return == 20.0
    assert rows[0].qdiff == pytest.approx(1.0 / 3.0, rel=1e-5)
    assert final_mean100(path) == 15.0


def test_empty_run_has_no_final_mean(tmp_path: Path) -> None:
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, [])
    assert path.read_text(encoding="utf-8") == ",".join(CSV_HEADER) + "\n"
    assert final_mean100(path) is None


def test_read_rejects_foreign_header(tmp_path: Path) -> None:
    path = tmp_path / "metrics.csv"
    path.write_text("episode,reward\n1,2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_metrics_csv(path)
