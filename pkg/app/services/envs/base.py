from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np
import numpy.typing as npt


class ObservationMode(str, Enum):
    STATE = "state"
    IMAGE = "image"


@dataclass(frozen=True)
class EnvState:
    vector: npt.NDArray[np.float64]
    steps: int = 0
    terminal: bool = False


@dataclass(frozen=True)
class StepResult:
    state: EnvState
    reward: float
    terminal: bool


@dataclass(frozen=True)
class Observation:
    mode: ObservationMode
    data: npt.NDArray[np.float64]


class Environment(Protocol):
    name: str
    action_count: int
    state_dim: int

    def reset(self, rng: np.random.Generator) -> EnvState:
        raise NotImplementedError

    def step(self, state: EnvState, action: int, rng: np.random.Generator) -> StepResult:
        raise NotImplementedError

    def state_vector(self, state: EnvState) -> npt.NDArray[np.float64]:
        raise NotImplementedError

    def render(self, state: EnvState, h: int, w: int) -> npt.NDArray[np.float64]:
        raise NotImplementedError

    def probe_states(self) -> list[EnvState]:
        raise NotImplementedError
