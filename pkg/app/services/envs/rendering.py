from __future__ import annotations

import math
from collections import deque
from typing import Sequence

import numpy as np
import numpy.typing as npt

from app.errors import EnvError
from app.services.envs.base import Environment, EnvState, Observation, ObservationMode

Frame = npt.NDArray[np.float64]

TRACK_WORLD_WIDTH = 4.8
TRACK_LEVEL = 0.5
GOAL_LEVEL = 0.5


def _check_size(h: int, w: int, minimum: int = 8) -> None:
    if h < minimum or w < minimum:
        raise EnvError(f"frames must be at least {minimum}x{minimum}, got {h}x{w}")


def render_cartpole(state: EnvState, h: int, w: int) -> Frame:
    """Track line, a two-row cart and the pole, drawn symmetric about the frame's vertical centre line."""
    _check_size(h, w)
    x, _, theta, _ = (float(value) for value in state.vector)
    frame = np.zeros((h, w))
    scale = w / TRACK_WORLD_WIDTH
    track_row = int(0.75 * h)
    frame[track_row, :] = TRACK_LEVEL

    # column centres measured from the frame's centre line, so mirroring negates them exactly
    offsets = (np.arange(w) + 0.5) - w / 2.0
    cart_x = x * scale
    half_cart = max(1.0, w / 16.0)
    cart_cols = np.abs(offsets - cart_x) <= half_cart
    cart_top = max(track_row - 2, 0)
    frame[cart_top:track_row, cart_cols] = 1.0

    pole_length = 0.4 * h
    base = np.array([cart_x, float(cart_top)])
    tip = base + pole_length * np.array([math.sin(theta), -math.cos(theta)])
    rows = np.arange(h) + 0.5
    px, py = np.meshgrid(offsets, rows)
    seg = tip - base
    t = np.clip(((px - base[0]) * seg[0] + (py - base[1]) * seg[1]) / float(seg @ seg), 0.0, 1.0)
    dist_sq = (px - base[0] - t * seg[0]) ** 2 + (py - base[1] - t * seg[1]) ** 2
    frame[dist_sq <= 0.25] = 1.0
    return frame


def render_gridworld(cell: int, goal: int, width: int, height: int, h: int, w: int) -> Frame:
    if h < height or w < width:
        raise EnvError(f"a {h}x{w} frame cannot show a {width}x{height} grid")
    frame = np.zeros((h, w))

    def block(index: int) -> tuple[slice, slice]:
        row, col = divmod(index, width)
        return (
            slice(row * h // height, (row + 1) * h // height),
            slice(col * w // width, (col + 1) * w // width),
        )

    frame[block(goal)] = GOAL_LEVEL
    frame[block(cell)] = 1.0
    return frame


def preprocess(frames: Sequence[Frame], m: int) -> Observation:
    if m < 1:
        raise EnvError(f"frame stack depth must be positive, got {m}")
    if not frames:
        raise EnvError("at least one frame is needed to build an observation")
    recent = list(frames)[-m:]
    padded = [recent[0]] * (m - len(recent)) + recent
    data = np.clip(np.stack(padded), 0.0, 1.0).reshape(-1)
    return Observation(mode=ObservationMode.IMAGE, data=data)


class FrameStack:
    def __init__(self, m: int) -> None:
        if m < 1:
            raise EnvError(f"frame stack depth must be positive, got {m}")
        self.m = m
        self._frames: deque[Frame] = deque(maxlen=m)

    def reset(self, frame: Frame) -> Observation:
        self._frames.clear()
        return self.push(frame)

    def push(self, frame: Frame) -> Observation:
        self._frames.append(frame)
        return preprocess(list(self._frames), self.m)


class ObservationEncoder:
    def __init__(
        self,
        env: Environment,
        mode: ObservationMode = ObservationMode.STATE,
        h: int = 16,
        w: int = 16,
        m: int = 4,
    ) -> None:
        self.env = env
        self.mode = ObservationMode(mode)
        self.h = h
        self.w = w
        self.m = m
        self._stack = FrameStack(m)

    @property
    def dim(self) -> int:
        if self.mode is ObservationMode.IMAGE:
            return self.m * self.h * self.w
        return self.env.state_dim

    def reset(self, state: EnvState) -> npt.NDArray[np.float64]:
        if self.mode is ObservationMode.IMAGE:
            return self._stack.reset(self.env.render(state, self.h, self.w)).data
        return self.env.state_vector(state)

    def step(self, state: EnvState) -> npt.NDArray[np.float64]:
        if self.mode is ObservationMode.IMAGE:
            return self._stack.push(self.env.render(state, self.h, self.w)).data
        return self.env.state_vector(state)

    def encode_static(self, state: EnvState) -> npt.NDArray[np.float64]:
        if self.mode is ObservationMode.IMAGE:
            return preprocess([self.env.render(state, self.h, self.w)], self.m).data
        return self.env.state_vector(state)
