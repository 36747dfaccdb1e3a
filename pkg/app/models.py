from __future__ import annotations

from datetime import datetime

from sqlalchemy import Boolean, DateTime, Float, ForeignKey, Integer, String, Text
from sqlalchemy.orm import Mapped, mapped_column, relationship

from app.db import Base


class Sweep(Base):
    __tablename__ = "sweeps"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    parameter: Mapped[str] = mapped_column(String(50), index=True)
    values: Mapped[str] = mapped_column(Text)
    seeds: Mapped[str] = mapped_column(Text)
    created_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow, index=True)

    runs: Mapped[list[Run]] = relationship("Run", back_populates="sweep")


class Run(Base):
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    sweep_id: Mapped[int | None] = mapped_column(ForeignKey("sweeps.id"), index=True)
    env: Mapped[str] = mapped_column(String(20), index=True)
    variant: Mapped[str] = mapped_column(String(10), index=True)
    seed: Mapped[int] = mapped_column(Integer)
    obs_mode: Mapped[str] = mapped_column(String(10))
    episodes: Mapped[int] = mapped_column(Integer, default=0)
    total_steps: Mapped[int] = mapped_column(Integer, default=0)
    final_return: Mapped[float | None] = mapped_column(Float)
    final_mean100: Mapped[float | None] = mapped_column(Float, index=True)
    final_std100: Mapped[float | None] = mapped_column(Float)
    final_qdiff: Mapped[float | None] = mapped_column(Float)
    initial_qdiff: Mapped[float | None] = mapped_column(Float)
    sweep_value: Mapped[float | None] = mapped_column(Float)
    metrics_path: Mapped[str] = mapped_column(Text, default="")
    checkpoint_paths: Mapped[str] = mapped_column(Text, default="")
    config_json: Mapped[str] = mapped_column(Text, default="{}")
    status: Mapped[str] = mapped_column(String(10), default="ok")
    started_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow, index=True)
    finished_at: Mapped[datetime | None] = mapped_column(DateTime)

    sweep: Mapped[Sweep | None] = relationship("Sweep", back_populates="runs")


class VerifyReport(Base):
    __tablename__ = "verify_reports"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    trials: Mapped[int] = mapped_column(Integer)
    seed: Mapped[int] = mapped_column(Integer)
    tolerance: Mapped[float | None] = mapped_column(Float)
    passed: Mapped[bool] = mapped_column(Boolean)
    failed_suites: Mapped[str] = mapped_column(String(200), default="")
    report_path: Mapped[str] = mapped_column(Text, default="")
    created_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow, index=True)
