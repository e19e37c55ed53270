"""Diffusion-based auxiliary reward generation.

A generation agent runs a short reverse diffusion chain over a latent
vector, conditioned on the (observation, action) pair, then maps the final
latent to a bounded scalar reward through a squashed Gaussian head. An
evaluation agent learns a TD value of (observation, action, generated
reward) against the environment reward, and the generation agent is trained
to produce rewards the evaluation agent scores highly.

Everything is batched: conditions are ``(batch, obs_dim + action_dim)``.
Gradients are propagated by hand through the whole chain, so the chain's
noise draws are explicit (``ChainNoise``) to make every loss a deterministic
function of parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .buffers import ReplayBuffer
from .diffusion import STANDARD, DiffusionSchedule, build_schedule, timestep_embedding
from .nn import (
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
class DressConfig:
    latent_dim: int = 8
    temb_dim: int = 8
    K: int = 5
    beta_start: float = 1e-4
    beta_end: float = 0.2
    coef_mode: str = STANDARD
    denoiser_hidden: tuple[int, ...] = (64, 64)
    head_hidden: tuple[int, ...] = (32,)
    q_hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    e_s: float = 1.0
    e_b: float = 0.0
    gamma: float = 0.99
    tau: float = 0.005
    lr_generation: float = 3e-4
    lr_evaluation: float = 3e-4
    batch_size: int = 128
    capacity: int = 50_000

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.e_s <= 0:
            raise ValueError("e_s must be positive")


@dataclass
class ChainNoise:
    """All randomness of one batched generation: start latent, per-step
    noise (index k-1 for step k) and the reward-head noise."""

    z_K: np.ndarray
    eps: np.ndarray
    eps_reward: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, batch: int, latent_dim: int, K: int) -> "ChainNoise":
        z_K = rng.standard_normal((batch, latent_dim))
        eps = rng.standard_normal((K, batch, latent_dim))
        eps_r = rng.standard_normal((batch, 1))
        return cls(z_K, eps, eps_r)

    @classmethod
    def zeros(cls, batch: int, latent_dim: int, K: int) -> "ChainNoise":
        return cls(np.zeros((batch, latent_dim)), np.zeros((K, batch, latent_dim)), np.zeros((batch, 1)))


@dataclass
class _Tape:
    chain: list = field(default_factory=list)
    z0: np.ndarray | None = None
    mu_cache: object = None
    sigma_cache: object = None
    raw_log_std: np.ndarray | None = None
    head: object = None


class GenerationAgent:
    """Denoiser (theta) plus mean / log-std reward heads (phi)."""

    def __init__(self, obs_dim: int, action_dim: int, config: DressConfig, rng: np.random.Generator):
        self.config = config
        self.cond_dim = obs_dim + action_dim
        L = config.latent_dim
        self.denoiser_spec = MlpSpec(L + self.cond_dim + config.temb_dim, config.denoiser_hidden, L,
                                     config.activation)
        self.mu_spec = MlpSpec(L, config.head_hidden, 1, config.activation)
        self.sigma_spec = MlpSpec(L, config.head_hidden, 1, config.activation)
        self.theta = init_params(self.denoiser_spec, rng)
        # zero output layers: a fresh head emits mean 0 and log-std 0
        self.phi_mu = init_params(self.mu_spec, rng, out_scale=0.0)
        self.phi_sigma = init_params(self.sigma_spec, rng, out_scale=0.0)
        self.schedule: DiffusionSchedule = build_schedule(config.K, config.beta_start, config.beta_end)
        self.coef_a, self.coef_b, self.sigma = self.schedule.coefficients(config.coef_mode)
        self._temb = np.stack([timestep_embedding(k, config.temb_dim) for k in range(1, config.K + 1)])

    @property
    def param_sets(self) -> list[ParamSet]:
        return [self.theta, self.phi_mu, self.phi_sigma]

    def draw_noise(self, rng: np.random.Generator, batch: int) -> ChainNoise:
        return ChainNoise.draw(rng, batch, self.config.latent_dim, self.config.K)

    def predict_z0(self, z_k: np.ndarray, cond: np.ndarray, k: int):
        temb = np.broadcast_to(self._temb[k - 1], (z_k.shape[0], self.config.temb_dim))
        return forward_cached(self.denoiser_spec, self.theta, np.concatenate([z_k, cond, temb], axis=1))

    def reverse_chain(self, cond: np.ndarray, noise: ChainNoise, stochastic: bool = True,
                      tape: _Tape | None = None) -> np.ndarray:
        z = noise.z_K
        for k in range(self.config.K, 0, -1):
            z_hat, cache = self.predict_z0(z, cond, k)
            z_next = self.coef_a[k - 1] * z_hat + self.coef_b[k - 1] * z
            if stochastic and k > 1:
                z_next = z_next + self.sigma[k - 1] * noise.eps[k - 1]
            if not np.all(np.isfinite(z_next)):
                raise NonFiniteError(f"non-finite latent at denoising step {k}")
            if tape is not None:
                tape.chain.append(cache)
            z = z_next
        return z

    def reverse_chain_backward(self, tape: _Tape, g_z0: np.ndarray) -> None:
        L = self.config.latent_dim
        g = g_z0
        # tape.chain holds steps K..1, so walk it backwards from k = 1
        for k, cache in zip(range(1, self.config.K + 1), reversed(tape.chain)):
            g_in = backward_cached(self.denoiser_spec, self.theta, cache, self.coef_a[k - 1] * g)
            g = self.coef_b[k - 1] * g + g_in[:, :L]

    def head(self, z0: np.ndarray, eps_reward: np.ndarray, tape: _Tape | None = None) -> np.ndarray:
        kappa, mu_cache = forward_cached(self.mu_spec, self.phi_mu, z0)
        raw, sigma_cache = forward_cached(self.sigma_spec, self.phi_sigma, z0)
        out = gaussian_tanh_sample(kappa, clip_log_std(raw), eps_reward, self.config.e_s, self.config.e_b)
        if tape is not None:
            tape.z0, tape.mu_cache, tape.sigma_cache = z0, mu_cache, sigma_cache
            tape.raw_log_std, tape.head = raw, out
        return out.sample[:, 0]

    def head_backward(self, tape: _Tape, d_reward: np.ndarray) -> np.ndarray:
        d_mean, d_log_std = tape.head.backward(d_reward[:, None])
        d_raw = d_log_std * clip_grad_mask(tape.raw_log_std)
        g = backward_cached(self.mu_spec, self.phi_mu, tape.mu_cache, d_mean)
        g = g + backward_cached(self.sigma_spec, self.phi_sigma, tape.sigma_cache, d_raw)
        return g

    def generate(self, cond: np.ndarray, noise: ChainNoise, stochastic: bool = True,
                 tape: _Tape | None = None) -> np.ndarray:
        """Batched rewards for conditions ``cond``; bounded in [e_b - e_s, e_b + e_s]."""
        z0 = self.reverse_chain(cond, noise, stochastic, tape)
        return self.head(z0, noise.eps_reward, tape)

    def backward(self, tape: _Tape, d_reward: np.ndarray) -> None:
        """Accumulate d loss / d (theta, phi) given d loss / d reward."""
        self.reverse_chain_backward(tape, self.head_backward(tape, d_reward))


def dress_observation(obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(obs, dtype=np.float64).ravel(), np.asarray(action, dtype=np.float64).ravel()])


def reverse_sample(agent: GenerationAgent, cond: np.ndarray, rng: np.random.Generator,
                   stochastic: bool = True) -> np.ndarray:
    """Final latent z0 for a single condition vector or a batch."""
    c = np.atleast_2d(cond)
    z0 = agent.reverse_chain(c, agent.draw_noise(rng, c.shape[0]), stochastic)
    return z0[0] if np.ndim(cond) == 1 else z0


def generate_reward(agent: GenerationAgent, obs: np.ndarray, action: np.ndarray,
                    rng: np.random.Generator) -> float:
    cond = dress_observation(obs, action)[None, :]
    return float(agent.generate(cond, agent.draw_noise(rng, 1))[0])


def combine_rewards(r_e, r_g, beta: float):
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return r_e + beta * r_g


class EvaluationAgent:
    """Q(observation, action, generated reward) with a soft-updated target."""

    def __init__(self, cond_dim: int, config: DressConfig, rng: np.random.Generator):
        self.config = config
        self.spec = MlpSpec(cond_dim + 1, config.q_hidden, 1, config.activation)
        self.q = init_params(self.spec, rng)
        self.q_target = self.q.copy()
        self.gamma = config.gamma
        self.tau = config.tau
        self.skipped_updates = 0

    def _inputs(self, cond, r):
        return np.concatenate([cond, np.asarray(r, dtype=np.float64).reshape(-1, 1)], axis=1)

    def value(self, cond, r, target: bool = False) -> np.ndarray:
        params = self.q_target if target else self.q
        return forward_cached(self.spec, params, self._inputs(cond, r))[0][:, 0]

    def value_and_grad_r(self, cond, r) -> tuple[np.ndarray, np.ndarray]:
        """Q and dQ/dr per row; the network's own gradients are untouched."""
        q, cache = forward_cached(self.spec, self.q, self._inputs(cond, r))
        g_in = backward_cached(self.spec, self.q, cache, np.ones_like(q), accumulate=False)
        return q[:, 0], g_in[:, -1]


def evaluation_td_target(batch: dict, eval_agent: EvaluationAgent, gen_agent: GenerationAgent,
                         rng: np.random.Generator) -> np.ndarray:
    """y = r_e + gamma (1 - done) Q'(s_g', r_g'), with r_g' regenerated now."""
    s_next = batch["s_g_next"]
    r_next = gen_agent.generate(s_next, gen_agent.draw_noise(rng, s_next.shape[0]))
    q_next = eval_agent.value(s_next, r_next, target=True)
    return batch["r_e"] + eval_agent.gamma * (1.0 - batch["done"]) * q_next


def evaluation_loss(batch: dict, eval_agent: EvaluationAgent, y: np.ndarray, accumulate: bool = False) -> float:
    q, cache = forward_cached(eval_agent.spec, eval_agent.q, eval_agent._inputs(batch["s_g"], batch["r_g"]))
    err = q[:, 0] - y
    if accumulate:
        backward_cached(eval_agent.spec, eval_agent.q, cache, (2.0 * err / err.size)[:, None])
    return float(np.mean(err**2))


def evaluation_update(batch: dict, eval_agent: EvaluationAgent, gen_agent: GenerationAgent,
                      rng: np.random.Generator, y: np.ndarray | None = None) -> float:
    """One MSE step on Q toward TD targets, then a soft target update.

    Returns NaN (and counts a skip) if the loss or gradients are non-finite.
    """
    if y is None:
        y = evaluation_td_target(batch, eval_agent, gen_agent, rng)
    eval_agent.q.zero_grad()
    loss = evaluation_loss(batch, eval_agent, y, accumulate=True)
    try:
        if not np.isfinite(loss):
            raise NonFiniteError("non-finite evaluation loss")
        adam_step(eval_agent.q, eval_agent.config.lr_evaluation)
    except NonFiniteError:
        eval_agent.q.zero_grad()
        eval_agent.skipped_updates += 1
        return float("nan")
    soft_update(eval_agent.q_target, eval_agent.q, eval_agent.tau)
    return loss


def generation_loss(cond: np.ndarray, gen_agent: GenerationAgent, critic, noise: ChainNoise,
                    accumulate: bool = False) -> float:
    """-mean critic(cond, r) with r regenerated through the full chain.

    ``critic`` is anything with ``value_and_grad_r(cond, r)``; only its
    input gradient is used.
    """
    tape = _Tape() if accumulate else None
    r = gen_agent.generate(cond, noise, stochastic=True, tape=tape)
    q, dq_dr = critic.value_and_grad_r(cond, r)
    if accumulate:
        gen_agent.backward(tape, -dq_dr / q.size)
    return float(-np.mean(q))


def generation_update(batch: dict, gen_agent: GenerationAgent, critic, rng: np.random.Generator) -> float:
    cond = batch["s_g"]
    noise = gen_agent.draw_noise(rng, cond.shape[0])
    for p in gen_agent.param_sets:
        p.zero_grad()
    loss = generation_loss(cond, gen_agent, critic, noise, accumulate=True)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(p.grads)) for p in gen_agent.param_sets):
        for p in gen_agent.param_sets:
            p.zero_grad()
        return float("nan")
    for p in gen_agent.param_sets:
        adam_step(p, gen_agent.config.lr_generation)
    return loss


def denoiser_supervised_loss(gen_agent: GenerationAgent, cond: np.ndarray, z0: np.ndarray, k: np.ndarray,
                             eps: np.ndarray, accumulate: bool = False) -> float:
    """mean_b ||z0 - z0_hat(z_k, cond, k)||^2 with z_k from forward noising.

    ``k`` is an integer array (one step per row). Used only with synthetic
    labels; live training has no clean latents.
    """
    sched = gen_agent.schedule
    ab = sched.alpha_bars[np.asarray(k) - 1][:, None]
    z_k = np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
    temb = gen_agent._temb[np.asarray(k) - 1]
    pred, cache = forward_cached(gen_agent.denoiser_spec, gen_agent.theta, np.concatenate([z_k, cond, temb], axis=1))
    diff = pred - z0
    if accumulate:
        backward_cached(gen_agent.denoiser_spec, gen_agent.theta, cache, 2.0 * diff / diff.shape[0])
    return float(np.mean(np.sum(diff**2, axis=1)))


class DressShaper:
    """Bolt-on reward shaper: both agents, the reward buffer, and the
    one-step delay needed to store the next action alongside each record."""

    def __init__(self, obs_dim: int, action_dim: int, config: DressConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config or DressConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim, self.action_dim = obs_dim, action_dim
        self.gen = GenerationAgent(obs_dim, action_dim, self.config, rng)
        self.eval = EvaluationAgent(self.gen.cond_dim, self.config, rng)
        cd = self.gen.cond_dim
        self.buffer = ReplayBuffer(self.config.capacity,
                                   {"s_g": (cd,), "r_g": (), "s_g_next": (cd,), "r_e": (), "done": ()})
        self._pending: dict | None = None

    def reward(self, obs, action, rng: np.random.Generator) -> float:
        return generate_reward(self.gen, obs, action, rng)

    def observe(self, obs, action, r_g: float, next_obs, r_e: float, done: bool) -> None:
        """Record a step. The record is completed (and stored) once the next
        action is known, or immediately at an episode end."""
        self.resolve_pending(action)
        self._pending = {"s_g": dress_observation(obs, action), "r_g": r_g, "next_obs": np.asarray(next_obs),
                         "r_e": r_e, "done": float(done)}

    def resolve_pending(self, next_action) -> None:
        if self._pending is None:
            return
        p = self._pending
        self._pending = None
        self.buffer.push(s_g=p["s_g"], r_g=p["r_g"], s_g_next=dress_observation(p["next_obs"], next_action),
                         r_e=p["r_e"], done=p["done"])

    def end_episode(self) -> None:
        self.resolve_pending(np.zeros(self.action_dim))

    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size

    def update(self, rng: np.random.Generator) -> tuple[float, float]:
        batch = self.buffer.sample(self.config.batch_size, rng)
        g_loss = generation_update(batch, self.gen, self.eval, rng)
        q_loss = evaluation_update(batch, self.eval, self.gen, rng)
        return g_loss, q_loss

    def named_params(self) -> dict[str, tuple[MlpSpec, ParamSet]]:
        return {"theta": (self.gen.denoiser_spec, self.gen.theta),
                "phi_mu": (self.gen.mu_spec, self.gen.phi_mu),
                "phi_sigma": (self.gen.sigma_spec, self.gen.phi_sigma),
                "q": (self.eval.spec, self.eval.q),
                "q_target": (self.eval.spec, self.eval.q_target)}
