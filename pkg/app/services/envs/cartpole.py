from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from app.errors import EnvError
from app.services.envs.base import EnvState, StepResult
from app.services.envs.rendering import render_cartpole

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * HALF_LENGTH
FORCE = 10.0
TAU = 0.02

X_LIMIT = 2.4
THETA_LIMIT = 12.0 * math.pi / 180.0
MAX_STEPS = 200
INIT_BOUND = 0.05

LEFT, RIGHT = 0, 1
PROBE_SEED = 20_240_601
PROBE_COUNT = 32
_PROBE_SPAN = np.array([2.0, 1.0, 0.18, 1.0])


def is_terminal(vector: npt.NDArray[np.float64], steps: int) -> bool:
    x, _, theta, _ = vector
    return bool(abs(x) > X_LIMIT or abs(theta) > THETA_LIMIT or steps >= MAX_STEPS)


def cartpole_dynamics(vector: npt.NDArray[np.float64], action: int) -> npt.NDArray[np.float64]:
    x, x_dot, theta, theta_dot = (float(value) for value in vector)
    force = FORCE if action == RIGHT else -FORCE
    cos_theta = math.cos(theta)
    sin_theta = math.sin(theta)
    temp = (force + POLE_MASS_LENGTH * theta_dot**2 * sin_theta) / TOTAL_MASS
    theta_acc = (GRAVITY * sin_theta - cos_theta * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_theta**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS
    return np.array(
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    )


def cartpole_reset(seed: int | np.random.Generator) -> EnvState:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return EnvState(vector=rng.uniform(-INIT_BOUND, INIT_BOUND, size=4), steps=0, terminal=False)


def cartpole_step(state: EnvState, action: int) -> StepResult:
    if state.terminal:
        raise EnvError("cannot step a terminal cart-pole state")
    if action not in (LEFT, RIGHT):
        raise EnvError(f"invalid cart-pole action {action}")
    vector = cartpole_dynamics(state.vector, action)
    steps = state.steps + 1
    terminal = is_terminal(vector, steps)
    return StepResult(state=EnvState(vector=vector, steps=steps, terminal=terminal), reward=1.0, terminal=terminal)


class CartPole:
    name = "cartpole"
    action_count = 2
    state_dim = 4

    def reset(self, rng: np.random.Generator) -> EnvState:
        return cartpole_reset(rng)

    def step(self, state: EnvState, action: int, rng: np.random.Generator) -> StepResult:
        return cartpole_step(state, action)

    def state_vector(self, state: EnvState) -> npt.NDArray[np.float64]:
        return np.array(state.vector, dtype=np.float64)

    def render(self, state: EnvState, h: int, w: int) -> npt.NDArray[np.float64]:
        return render_cartpole(state, h, w)

    def probe_states(self) -> list[EnvState]:
        rng = np.random.default_rng(PROBE_SEED)
        draws = rng.uniform(-1.0, 1.0, size=(PROBE_COUNT, 4)) * _PROBE_SPAN
        return [EnvState(vector=row, steps=0, terminal=False) for row in draws]
