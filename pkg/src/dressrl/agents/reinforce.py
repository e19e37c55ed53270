"""Monte-Carlo policy gradient with a tanh-squashed Gaussian policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    MlpSpec,
    adam_step,
    backward_cached,
    clip_grad_mask,
    clip_log_std,
    forward_cached,
    gaussian_tanh_sample,
    init_params,
    tanh_gaussian_log_prob,
)


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """G_t = r_t + gamma * G_{t+1}, computed backwards."""
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


@dataclass(frozen=True)
class ReinforceConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    gamma: float = 0.99
    lr: float = 3e-4
    baseline: bool = False


class ReinforceAgent:
    on_policy = True

    def __init__(self, obs_dim: int, action_dim: int, config: ReinforceConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = c = config or ReinforceConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.action_dim = obs_dim, action_dim
        self.spec = MlpSpec(obs_dim, c.hidden, 2 * action_dim, c.activation)
        self.policy = init_params(self.spec, rng, out_scale=0.1)

    def select_action(self, obs, mode: str = "train", rng: np.random.Generator | None = None) -> np.ndarray:
        out = forward_cached(self.spec, self.policy, obs)[0]
        mean, raw = out[..., : self.action_dim], out[..., self.action_dim :]
        if mode == "eval":
            return np.tanh(mean)
        return gaussian_tanh_sample(mean, clip_log_std(raw), rng.standard_normal(mean.shape)).sample

    def loss(self, states, actions, rewards, accumulate: bool = False) -> float:
        """-sum_t log pi(a_t | s_t) G_t (optionally with G_t minus its mean)."""
        states = np.asarray(states, dtype=np.float64)
        if states.shape[0] == 0:
            raise ValueError("empty episode")
        G = discounted_returns(rewards, self.config.gamma)
        if self.config.baseline:
            G = G - G.mean()
        out, cache = forward_cached(self.spec, self.policy, states)
        mean, raw = out[:, : self.action_dim], out[:, self.action_dim :]
        lp, d_mean, d_ls = tanh_gaussian_log_prob(mean, clip_log_std(raw), np.asarray(actions))
        if accumulate:
            w = -G[:, None]
            d_out = np.concatenate([w * d_mean, w * d_ls * clip_grad_mask(raw)], axis=1)
            backward_cached(self.spec, self.policy, cache, d_out)
        return float(-np.sum(lp * G))

    def update(self, states, actions, rewards) -> float:
        self.policy.zero_grad()
        loss = self.loss(states, actions, rewards, accumulate=True)
        if np.isfinite(loss) and np.all(np.isfinite(self.policy.grads)):
            adam_step(self.policy, self.config.lr)
        else:
            self.policy.zero_grad()
        return loss

    def named_params(self) -> dict:
        return {"policy": (self.spec, self.policy)}
