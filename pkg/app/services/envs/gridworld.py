from __future__ import annotations

from typing import Sequence

import numpy as np
import numpy.typing as npt

from app.errors import EnvError
from app.services.envs.base import EnvState, StepResult
from app.services.envs.rendering import render_gridworld

UP, DOWN, LEFT, RIGHT = range(4)
ACTION_COUNT = 4
_MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}


class Gridworld:
    name = "gridworld"
    action_count = ACTION_COUNT

    def __init__(
        self,
        width: int,
        height: int,
        goal_cell: int | None = None,
        step_reward: float | Sequence[float] = 0.0,
        goal_reward: float = 1.0,
        slip_prob: float = 0.0,
        start_cell: int | None = None,
    ) -> None:
        if width < 1 or height < 1 or width * height < 2:
            raise EnvError(f"gridworld needs at least two cells, got {width}x{height}")
        cells = width * height
        goal = cells - 1 if goal_cell is None else goal_cell
        if not 0 <= goal < cells:
            raise EnvError(f"goal cell {goal} outside a {width}x{height} grid")
        if not 0.0 <= slip_prob < 1.0:
            raise EnvError(f"slip probability must lie in [0, 1), got {slip_prob}")
        if start_cell is not None and (not 0 <= start_cell < cells or start_cell == goal):
            raise EnvError(f"start cell {start_cell} must be a non-goal cell of the grid")
        rewards = np.broadcast_to(np.asarray(step_reward, dtype=np.float64), (cells,))
        if rewards.shape != (cells,) or not np.all(np.isfinite(rewards)):
            raise EnvError(f"step reward must be a scalar or one finite value per cell ({cells})")
        self.width = width
        self.height = height
        self.goal_cell = goal
        self.step_rewards = rewards.copy()
        self.goal_reward = float(goal_reward)
        self.slip_prob = float(slip_prob)
        self.start_cell = start_cell

    @property
    def cell_count(self) -> int:
        return self.width * self.height

    @property
    def state_dim(self) -> int:
        return self.cell_count

    def non_goal_cells(self) -> list[int]:
        return [cell for cell in range(self.cell_count) if cell != self.goal_cell]

    def move(self, cell: int, action: int) -> int:
        row, col = divmod(cell, self.width)
        d_row, d_col = _MOVES[action]
        row = min(max(row + d_row, 0), self.height - 1)
        col = min(max(col + d_col, 0), self.width - 1)
        return row * self.width + col

    def reward_for(self, next_cell: int) -> float:
        if next_cell == self.goal_cell:
            return self.goal_reward
        return float(self.step_rewards[next_cell])

    def cell_of(self, state: EnvState) -> int:
        return int(state.vector[0])

    def state_at(self, cell: int, steps: int = 0) -> EnvState:
        return EnvState(
            vector=np.array([float(cell)]),
            steps=steps,
            terminal=cell == self.goal_cell,
        )

    def reset(self, rng: np.random.Generator) -> EnvState:
        if self.start_cell is not None:
            return self.state_at(self.start_cell)
        candidates = self.non_goal_cells()
        return self.state_at(candidates[int(rng.integers(len(candidates)))])

    def step(self, state: EnvState, action: int, rng: np.random.Generator) -> StepResult:
        if state.terminal:
            raise EnvError("cannot step a terminal gridworld state")
        if not 0 <= action < ACTION_COUNT:
            raise EnvError(f"invalid gridworld action {action}")
        if self.slip_prob > 0.0 and rng.random() < self.slip_prob:
            action = int(rng.integers(ACTION_COUNT))
        next_cell = self.move(self.cell_of(state), action)
        next_state = self.state_at(next_cell, steps=state.steps + 1)
        return StepResult(state=next_state, reward=self.reward_for(next_cell), terminal=next_state.terminal)

    def state_vector(self, state: EnvState) -> npt.NDArray[np.float64]:
        one_hot = np.zeros(self.cell_count)
        one_hot[self.cell_of(state)] = 1.0
        return one_hot

    def render(self, state: EnvState, h: int, w: int) -> npt.NDArray[np.float64]:
        return render_gridworld(self.cell_of(state), self.goal_cell, self.width, self.height, h, w)

    def probe_states(self) -> list[EnvState]:
        return [self.state_at(cell) for cell in self.non_goal_cells()]


def gridworld_new(
    width: int,
    height: int,
    goal_cell: int | None = None,
    step_reward: float | Sequence[float] = 0.0,
    goal_reward: float = 1.0,
    slip_prob: float = 0.0,
    start_cell: int | None = None,
) -> Gridworld:
    return Gridworld(width, height, goal_cell, step_reward, goal_reward, slip_prob, start_cell)


def _backup(env: Gridworld, values: npt.NDArray[np.float64], gamma: float) -> npt.NDArray[np.float64]:
    q = np.zeros((env.cell_count, ACTION_COUNT))
    slip = env.slip_prob
    for cell in env.non_goal_cells():
        outcome = np.empty(ACTION_COUNT)
        for actual in range(ACTION_COUNT):
            nxt = env.move(cell, actual)
            continuation = 0.0 if nxt == env.goal_cell else gamma * values[nxt]
            outcome[actual] = env.reward_for(nxt) + continuation
        for action in range(ACTION_COUNT):
            q[cell, action] = (1.0 - slip) * outcome[action] + slip * outcome.mean()
    return q


def bellman_residual(env: Gridworld, q: npt.NDArray[np.float64], gamma: float) -> float:
    return float(np.max(np.abs(_backup(env, q.max(axis=1), gamma) - q)))


def gridworld_value_iteration(
    env: Gridworld,
    gamma: float,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
) -> npt.NDArray[np.float64]:
    """Optimal Q table, shape (cells, 4); the goal row stays zero since the goal is terminal."""
    if not 0.0 < gamma < 1.0:
        raise EnvError(f"gamma must lie in (0, 1), got {gamma}")
    q = np.zeros((env.cell_count, ACTION_COUNT))
    for _ in range(max_iterations):
        updated = _backup(env, q.max(axis=1), gamma)
        change = float(np.max(np.abs(updated - q)))
        q = updated
        if change <= tol * (1.0 - gamma):
            break
    return q


def greedy_policy(q: npt.NDArray[np.float64]) -> npt.NDArray[np.int64]:
    return np.argmax(q, axis=1)


def optimal_action_sets(q: npt.NDArray[np.float64], atol: float = 1e-9) -> list[set[int]]:
    best = q.max(axis=1, keepdims=True)
    return [set(np.flatnonzero(row >= top - atol).tolist()) for row, top in zip(q, best)]
