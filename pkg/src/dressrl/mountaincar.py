"""Continuous-action mountain car with a sparse goal bonus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_POSITION = -1.2
MAX_POSITION = 0.6
MAX_SPEED = 0.07
GOAL_POSITION = 0.45
POWER = 0.0015
GRAVITY = 0.0025
GOAL_REWARD = 100.0
MAX_STEPS = 999


@dataclass(frozen=True)
class CarState:
    position: float
    velocity: float


def car_reset(seed: int | np.random.Generator) -> CarState:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return CarState(float(rng.uniform(-0.6, -0.4)), 0.0)


def car_step(state: CarState, force: float) -> tuple[CarState, float, bool]:
    """One physics step. ``done`` here only signals the goal; the step cap
    lives in ``MountainCarEnv``."""
    force = float(np.clip(force, -1.0, 1.0))
    v = state.velocity + POWER * force - GRAVITY * np.cos(3.0 * state.position)
    v = float(np.clip(v, -MAX_SPEED, MAX_SPEED))
    x = float(np.clip(state.position + v, MIN_POSITION, MAX_POSITION))
    if x >= GOAL_POSITION:
        return CarState(x, v), GOAL_REWARD, True
    return CarState(x, v), -0.1 * force * force, False


class MountainCarEnv:
    obs_dim = 2
    action_dim = 1

    def __init__(self, max_steps: int = MAX_STEPS):
        self.max_steps = max_steps
        self.state: CarState | None = None
        self.t = 0

    def encode(self, state: CarState) -> np.ndarray:
        return np.array([(state.position + 0.3) / 0.9, state.velocity / MAX_SPEED])

    def reset(self, rng: np.random.Generator | int) -> np.ndarray:
        self.state = car_reset(rng)
        self.t = 0
        return self.encode(self.state)

    def step(self, action: np.ndarray):
        self.state, r, goal = car_step(self.state, float(np.asarray(action).ravel()[0]))
        self.t += 1
        done = goal or self.t >= self.max_steps
        return self.encode(self.state), r, done, {"goal": goal, "case1": False, "terminal": goal}
