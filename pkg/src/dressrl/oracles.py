"""Problems with known answers for the generation and evaluation agents.

``QuadraticBowlCritic`` replaces the learned evaluation agent with
Q(s, r) = -(r - target)^2, so the best generated reward is ``target``
everywhere. ``train_synthetic`` runs both agents end to end on a one-step
problem whose environment reward is -(r_g - sin(s_1) a_1)^2; with gamma = 0
the learned Q is maximised at that target, so a working generator tracks it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dress import DressConfig, DressShaper, GenerationAgent, dress_observation, generation_update


@dataclass(frozen=True)
class QuadraticBowlCritic:
    target: float = 0.7

    def value_and_grad_r(self, cond, r) -> tuple[np.ndarray, np.ndarray]:
        d = np.asarray(r, dtype=np.float64) - self.target
        return -(d**2), -2.0 * d


def train_against_stub(target: float = 0.7, updates: int = 500, seed: int = 0, obs_dim: int = 4,
                       action_dim: int = 2, batch: int = 64, config: DressConfig | None = None,
                       ) -> tuple[GenerationAgent, float]:
    """Fit the generator to the bowl; returns it and its mean output on fresh conditions."""
    rng = np.random.default_rng(seed)
    cfg = config or DressConfig(lr_generation=1e-3)
    gen = GenerationAgent(obs_dim, action_dim, cfg, rng)
    critic = QuadraticBowlCritic(target)
    for _ in range(updates):
        cond = rng.uniform(-1, 1, (batch, obs_dim + action_dim))
        generation_update({"s_g": cond}, gen, critic, rng)
    held_out = rng.uniform(-1, 1, (1000, obs_dim + action_dim))
    mean = float(np.mean(gen.generate(held_out, gen.draw_noise(rng, 1000))))
    return gen, mean


def synthetic_target(obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    return np.sin(np.asarray(obs)[..., 0]) * np.asarray(action)[..., 0]


@dataclass
class SyntheticResult:
    shaper: DressShaper
    correlation: float
    generated: np.ndarray
    target: np.ndarray


def train_synthetic(steps: int = 3000, seed: int = 0, obs_dim: int = 2, action_dim: int = 1,
                    config: DressConfig | None = None, eval_points: int = 500) -> SyntheticResult:
    """One-step episodes with r_E = -(r_g - r*(s, a))^2 and gamma = 0.

    Each step draws (s, a), generates r_g, stores the record and runs one
    update of both agents. Returns the held-out Pearson correlation between
    r* and the generator's output with the reward-head noise at zero.
    """
    rng = np.random.default_rng(seed)
    cfg = replace(config or DressConfig(lr_generation=1e-3, lr_evaluation=1e-3, batch_size=64),
                  gamma=0.0)
    shaper = DressShaper(obs_dim, action_dim, cfg, rng)
    for _ in range(steps):
        s = rng.uniform(-np.pi / 2, np.pi / 2, obs_dim)
        a = rng.uniform(-1, 1, action_dim)
        r_g = shaper.reward(s, a, rng)
        r_e = -(r_g - float(synthetic_target(s, a))) ** 2
        shaper.observe(s, a, r_g, s, r_e, True)
        shaper.end_episode()
        if shaper.ready():
            shaper.update(rng)
    s = rng.uniform(-np.pi / 2, np.pi / 2, (eval_points, obs_dim))
    a = rng.uniform(-1, 1, (eval_points, action_dim))
    cond = np.stack([dress_observation(si, ai) for si, ai in zip(s, a)])
    gen = shaper.gen
    noise = gen.draw_noise(rng, eval_points)
    noise.eps_reward[:] = 0.0
    generated = gen.generate(cond, noise, stochastic=True)
    target = synthetic_target(s, a)
    return SyntheticResult(shaper, float(np.corrcoef(generated, target)[0, 1]), generated, target)
