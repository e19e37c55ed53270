"""Deterministic policy gradient baselines: TD3 and DDPG.

DDPG is TD3 with a single critic, no target-policy smoothing and an actor
update on every critic step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import MlpSpec, NonFiniteError, adam_step, backward_cached, forward_cached, init_params, soft_update


@dataclass(frozen=True)
class Td3Config:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    twin: bool = True
    policy_delay: int = 2
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    exploration_noise: float = 0.1


def DdpgConfig(**kw) -> Td3Config:
    base = dict(twin=False, policy_delay=1, policy_noise=0.0, noise_clip=0.0)
    base.update(kw)
    return Td3Config(**base)


class Td3Agent:
    def __init__(self, obs_dim: int, action_dim: int, config: Td3Config | None = None,
                 rng: np.random.Generator | None = None):
        self.config = c = config or Td3Config()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.action_dim = obs_dim, action_dim
        self.actor_spec = MlpSpec(obs_dim, c.hidden, action_dim, c.activation)
        self.critic_spec = MlpSpec(obs_dim + action_dim, c.hidden, 1, c.activation)
        self.actor = init_params(self.actor_spec, rng, out_scale=0.1)
        self.actor_target = self.actor.copy()
        self.critics = [init_params(self.critic_spec, rng) for _ in range(2 if c.twin else 1)]
        self.critic_targets = [q.copy() for q in self.critics]
        self.critic_updates = 0
        self.actor_updates = 0
        self.skipped_updates = 0

    def _act(self, params, s):
        out, cache = forward_cached(self.actor_spec, params, s)
        return np.tanh(out), cache

    def _q(self, params, s, a):
        return forward_cached(self.critic_spec, params, np.concatenate([s, a], axis=1))

    def select_action(self, obs, mode: str = "train", rng: np.random.Generator | None = None) -> np.ndarray:
        a = self._act(self.actor, obs)[0]
        if mode == "eval" or self.config.exploration_noise == 0.0:
            return a
        return np.clip(a + self.config.exploration_noise * rng.standard_normal(a.shape), -1.0, 1.0)

    def critic_target(self, batch: dict, smoothing_noise: np.ndarray | None = None) -> np.ndarray:
        a_next = self._act(self.actor_target, batch["s_next"])[0]
        if self.config.policy_noise > 0.0 and smoothing_noise is not None:
            eps = np.clip(self.config.policy_noise * smoothing_noise, -self.config.noise_clip, self.config.noise_clip)
            a_next = np.clip(a_next + eps, -1.0, 1.0)
        qs = [self._q(qt, batch["s_next"], a_next)[0][:, 0] for qt in self.critic_targets]
        return batch["r"] + self.config.gamma * (1.0 - batch["done"]) * np.min(qs, axis=0)

    def critic_loss(self, batch: dict, smoothing_noise: np.ndarray | None = None, accumulate: bool = False) -> float:
        """Mean squared TD error, averaged over critics."""
        y = self.critic_target(batch, smoothing_noise)
        total = 0.0
        n_c = len(self.critics)
        for q in self.critics:
            pred, cache = self._q(q, batch["s"], batch["a"])
            err = pred[:, 0] - y
            total += float(np.mean(err**2)) / n_c
            if accumulate:
                backward_cached(self.critic_spec, q, cache, (2.0 * err / (err.size * n_c))[:, None])
        return total

    def actor_loss(self, batch: dict, accumulate: bool = False) -> float:
        s = batch["s"]
        a, cache = self._act(self.actor, s)
        q, qcache = self._q(self.critics[0], s, a)
        loss = -float(np.mean(q))
        if accumulate:
            g = backward_cached(self.critic_spec, self.critics[0], qcache,
                                np.full((s.shape[0], 1), -1.0 / s.shape[0]), accumulate=False)
            d_a = g[:, self.obs_dim :]
            backward_cached(self.actor_spec, self.actor, cache, d_a * (1.0 - a * a))
        return loss

    def update(self, batch: dict, rng: np.random.Generator) -> dict:
        noise = rng.standard_normal(batch["a"].shape) if self.config.policy_noise > 0 else None
        for q in self.critics:
            q.zero_grad()
        c_loss = self.critic_loss(batch, noise, accumulate=True)
        try:
            if not np.isfinite(c_loss):
                raise NonFiniteError("non-finite critic loss")
            for q in self.critics:
                adam_step(q, self.config.lr_critic)
        except NonFiniteError:
            for q in self.critics:
                q.zero_grad()
            self.skipped_updates += 1
            return {"critic_loss": float("nan"), "actor_loss": float("nan")}
        self.critic_updates += 1
        a_loss = float("nan")
        if self.critic_updates % self.config.policy_delay == 0:
            self.actor.zero_grad()
            a_loss = self.actor_loss(batch, accumulate=True)
            if np.isfinite(a_loss):
                adam_step(self.actor, self.config.lr_actor)
                self.actor_updates += 1
                soft_update(self.actor_target, self.actor, self.config.tau)
                for qt, q in zip(self.critic_targets, self.critics):
                    soft_update(qt, q, self.config.tau)
            else:
                self.actor.zero_grad()
                self.skipped_updates += 1
        return {"critic_loss": c_loss, "actor_loss": a_loss}

    def named_params(self) -> dict:
        out = {"actor": (self.actor_spec, self.actor), "actor_target": (self.actor_spec, self.actor_target)}
        for i, (q, qt) in enumerate(zip(self.critics, self.critic_targets), start=1):
            out[f"q{i}"] = (self.critic_spec, q)
            out[f"q{i}_target"] = (self.critic_spec, qt)
        return out


def make_ddpg(obs_dim: int, action_dim: int, rng: np.random.Generator | None = None, **kw) -> Td3Agent:
    return Td3Agent(obs_dim, action_dim, DdpgConfig(**kw), rng)
