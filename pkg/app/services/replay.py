from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.errors import EmptyBufferError, ShapeError

DEFAULT_CAPACITY = 5000


@dataclass(frozen=True)
class Transition:
    obs: npt.NDArray[np.float64]
    action: int
    reward: float
    next_obs: npt.NDArray[np.float64]
    terminal: bool


@dataclass(frozen=True)
class Batch:
    obs: npt.NDArray[np.float64]
    actions: npt.NDArray[np.int64]
    rewards: npt.NDArray[np.float64]
    next_obs: npt.NDArray[np.float64]
    terminals: npt.NDArray[np.bool_]

    def __len__(self) -> int:
        return self.actions.shape[0]

    @classmethod
    def from_transitions(cls, transitions: list[Transition]) -> Batch:
        return cls(
            obs=np.stack([t.obs for t in transitions]),
            actions=np.array([t.action for t in transitions], dtype=np.int64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_obs=np.stack([t.next_obs for t in transitions]),
            terminals=np.array([t.terminal for t in transitions], dtype=bool),
        )


class ReplayBuffer:
    def __init__(self, capacity: int = DEFAULT_CAPACITY) -> None:
        if capacity < 1:
            raise ShapeError(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._slots: list[Transition | None] = [None] * capacity
        self._cursor = 0
        self._fill = 0

    def __len__(self) -> int:
        return self._fill

    def push(self, transition: Transition) -> None:
        self._slots[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity
        self._fill = min(self._fill + 1, self.capacity)

    def contents(self) -> list[Transition]:
        if self._fill < self.capacity:
            return [t for t in self._slots[: self._fill] if t is not None]
        ordered = self._slots[self._cursor :] + self._slots[: self._cursor]
        return [t for t in ordered if t is not None]

    def sample_indices(self, batch: int, rng: np.random.Generator) -> npt.NDArray[np.int64]:
        if self._fill == 0:
            raise EmptyBufferError("cannot sample from an empty replay buffer")
        return rng.integers(0, self._fill, size=batch)

    def sample(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        slots = self._slots
        return [slots[int(index)] for index in self.sample_indices(batch, rng)]  # type: ignore[misc]

    def sample_batch(self, batch: int, rng: np.random.Generator) -> Batch:
        return Batch.from_transitions(self.sample(batch, rng))
