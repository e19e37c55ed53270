"""Soft actor-critic with twin critics and a tanh-squashed Gaussian actor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    MlpSpec,
    NonFiniteError,
    ParamSet,
    adam_step,
    backward_cached,
    clip_grad_mask,
    clip_log_std,
    forward_cached,
    gaussian_tanh_sample,
    init_params,
    soft_update,
)


@dataclass(frozen=True)
class SacConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    alpha: float = 0.2
    auto_alpha: bool = False
    lr_alpha: float = 3e-4
    target_entropy: float | None = None


class SacAgent:
    def __init__(self, obs_dim: int, action_dim: int, config: SacConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = c = config or SacConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.action_dim = obs_dim, action_dim
        self.actor_spec = MlpSpec(obs_dim, c.hidden, 2 * action_dim, c.activation)
        self.critic_spec = MlpSpec(obs_dim + action_dim, c.hidden, 1, c.activation)
        self.actor = init_params(self.actor_spec, rng, out_scale=0.1)
        self.q1 = init_params(self.critic_spec, rng)
        self.q2 = init_params(self.critic_spec, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = ParamSet(np.array([np.log(c.alpha)]))
        self.target_entropy = -float(action_dim) if c.target_entropy is None else c.target_entropy
        self.skipped_updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.values[0]))

    def _policy(self, obs: np.ndarray, noise: np.ndarray):
        out, cache = forward_cached(self.actor_spec, self.actor, obs)
        mean, raw = out[..., : self.action_dim], out[..., self.action_dim :]
        head = gaussian_tanh_sample(mean, clip_log_std(raw), noise)
        return head, raw, cache

    def select_action(self, obs: np.ndarray, mode: str = "train", rng: np.random.Generator | None = None) -> np.ndarray:
        if mode == "eval":
            out = forward_cached(self.actor_spec, self.actor, obs)[0]
            return np.tanh(out[..., : self.action_dim])
        noise = rng.standard_normal(np.shape(obs)[:-1] + (self.action_dim,))
        return self._policy(obs, noise)[0].sample

    def _q(self, params: ParamSet, s, a):
        return forward_cached(self.critic_spec, params, np.concatenate([s, a], axis=1))

    def critic_target(self, batch: dict, noise_next: np.ndarray) -> np.ndarray:
        head, _, _ = self._policy(batch["s_next"], noise_next)
        q1 = self._q(self.q1_target, batch["s_next"], head.sample)[0][:, 0]
        q2 = self._q(self.q2_target, batch["s_next"], head.sample)[0][:, 0]
        soft_v = np.minimum(q1, q2) - self.alpha * head.log_prob
        return batch["r"] + self.config.gamma * (1.0 - batch["done"]) * soft_v

    def critic_loss(self, batch: dict, noise_next: np.ndarray, accumulate: bool = False) -> float:
        """Mean over both critics of the batch-mean half squared TD error."""
        y = self.critic_target(batch, noise_next)
        total = 0.0
        for q in (self.q1, self.q2):
            pred, cache = self._q(q, batch["s"], batch["a"])
            err = pred[:, 0] - y
            total += 0.5 * float(np.mean(0.5 * err**2))
            if accumulate:
                backward_cached(self.critic_spec, q, cache, (0.5 * err / err.size)[:, None])
        return total

    def actor_loss(self, batch: dict, noise: np.ndarray, accumulate: bool = False) -> float:
        s = batch["s"]
        head, raw, cache = self._policy(s, noise)
        a = head.sample
        q1, c1 = self._q(self.q1, s, a)
        q2, c2 = self._q(self.q2, s, a)
        q1, q2 = q1[:, 0], q2[:, 0]
        alpha = self.alpha
        loss = float(np.mean(alpha * head.log_prob - np.minimum(q1, q2)))
        if accumulate:
            n = s.shape[0]
            use1 = (q1 <= q2)[:, None]
            up = np.full((n, 1), -1.0 / n)
            g1 = backward_cached(self.critic_spec, self.q1, c1, up * use1, accumulate=False)
            g2 = backward_cached(self.critic_spec, self.q2, c2, up * ~use1, accumulate=False)
            d_a = (g1 + g2)[:, self.obs_dim :]
            d_mean, d_log_std = head.backward(d_a, np.full(n, alpha / n))
            d_out = np.concatenate([d_mean, d_log_std * clip_grad_mask(raw)], axis=1)
            backward_cached(self.actor_spec, self.actor, cache, d_out)
            self._last_log_prob = head.log_prob
        return loss

    def update_critic(self, batch: dict, rng: np.random.Generator) -> float:
        noise = rng.standard_normal((batch["s"].shape[0], self.action_dim))
        self.q1.zero_grad()
        self.q2.zero_grad()
        loss = self.critic_loss(batch, noise, accumulate=True)
        try:
            if not np.isfinite(loss):
                raise NonFiniteError("non-finite critic loss")
            adam_step(self.q1, self.config.lr_critic)
            adam_step(self.q2, self.config.lr_critic)
        except NonFiniteError:
            self.q1.zero_grad()
            self.q2.zero_grad()
            self.skipped_updates += 1
            return float("nan")
        soft_update(self.q1_target, self.q1, self.config.tau)
        soft_update(self.q2_target, self.q2, self.config.tau)
        return loss

    def update_actor(self, batch: dict, rng: np.random.Generator) -> float:
        noise = rng.standard_normal((batch["s"].shape[0], self.action_dim))
        self.actor.zero_grad()
        loss = self.actor_loss(batch, noise, accumulate=True)
        try:
            if not np.isfinite(loss):
                raise NonFiniteError("non-finite actor loss")
            adam_step(self.actor, self.config.lr_actor)
        except NonFiniteError:
            self.actor.zero_grad()
            self.skipped_updates += 1
            return float("nan")
        if self.config.auto_alpha:
            self.log_alpha.grads[0] = -float(np.mean(self._last_log_prob + self.target_entropy))
            adam_step(self.log_alpha, self.config.lr_alpha)
        return loss

    def update(self, batch: dict, rng: np.random.Generator) -> dict:
        return {"critic_loss": self.update_critic(batch, rng), "actor_loss": self.update_actor(batch, rng)}

    def named_params(self) -> dict:
        return {"actor": (self.actor_spec, self.actor), "q1": (self.critic_spec, self.q1),
                "q2": (self.critic_spec, self.q2), "q1_target": (self.critic_spec, self.q1_target),
                "q2_target": (self.critic_spec, self.q2_target)}
