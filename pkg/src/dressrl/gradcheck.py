"""Finite-difference checks for every trainable loss, on tiny networks.

Each check builds a fresh 2x8 network from one seed, evaluates the analytic
gradient through the module's own backward pass and compares it with central
differences over every parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .agents import ReinforceAgent, ReinforceConfig, SacAgent, SacConfig, Td3Agent, Td3Config, make_ddpg
from .dress import DressConfig, EvaluationAgent, GenerationAgent, evaluation_loss, generation_loss
from .nn import ParamSet, check_gradients

TINY = (8, 8)
OBS_DIM, ACTION_DIM, BATCH = 3, 2, 4
TOLERANCE = 1e-4
CHAIN_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    seed: int
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tolerance)


def _grads(params: list[ParamSet], run: Callable[[], object]) -> list[np.ndarray]:
    for p in params:
        p.zero_grad()
    run()
    out = [p.grads.copy() for p in params]
    for p in params:
        p.zero_grad()
    return out


def _check(loss: Callable[[bool], float], params: list[ParamSet]) -> float:
    return check_gradients(lambda: loss(False), lambda: _grads(params, lambda: loss(True)), params)


def _batch(rng: np.random.Generator) -> dict:
    return {
        "s": rng.normal(size=(BATCH, OBS_DIM)),
        "a": rng.uniform(-0.9, 0.9, (BATCH, ACTION_DIM)),
        "s_next": rng.normal(size=(BATCH, OBS_DIM)),
        "r": rng.normal(size=BATCH),
        "done": (rng.random(BATCH) < 0.3).astype(float),
    }


def _sac(seed: int) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    agent = SacAgent(OBS_DIM, ACTION_DIM, SacConfig(hidden=TINY), rng)
    batch, noise = _batch(rng), rng.normal(size=(BATCH, ACTION_DIM))
    return {
        "sac_critic": _check(lambda acc: agent.critic_loss(batch, noise, acc), [agent.q1, agent.q2]),
        "sac_actor": _check(lambda acc: agent.actor_loss(batch, noise, acc), [agent.actor]),
    }


def _td3(seed: int, ddpg: bool) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    agent = make_ddpg(OBS_DIM, ACTION_DIM, rng, hidden=TINY) if ddpg else \
        Td3Agent(OBS_DIM, ACTION_DIM, Td3Config(hidden=TINY), rng)
    batch = _batch(rng)
    smoothing = None if ddpg else rng.normal(size=(BATCH, ACTION_DIM))
    name = "ddpg" if ddpg else "td3"
    return {
        f"{name}_critic": _check(lambda acc: agent.critic_loss(batch, smoothing, acc), list(agent.critics)),
        f"{name}_actor": _check(lambda acc: agent.actor_loss(batch, acc), [agent.actor]),
    }


def _reinforce(seed: int) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    agent = ReinforceAgent(OBS_DIM, ACTION_DIM, ReinforceConfig(hidden=TINY), rng)
    s = rng.normal(size=(6, OBS_DIM))
    a = rng.uniform(-0.9, 0.9, (6, ACTION_DIM))
    r = rng.normal(size=6)
    return {"reinforce": _check(lambda acc: agent.loss(s, a, r, acc), [agent.policy])}


def _dress(seed: int, K: int = 3) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    cfg = DressConfig(K=K, denoiser_hidden=TINY, head_hidden=(8,), q_hidden=TINY)
    gen = GenerationAgent(OBS_DIM, ACTION_DIM, cfg, rng)
    critic = EvaluationAgent(OBS_DIM + ACTION_DIM, cfg, rng)
    # the reward head starts at exactly zero output; move it off that point
    # so the check exercises the whole chain
    for p in (gen.phi_mu, gen.phi_sigma):
        p.values += 0.3 * rng.normal(size=p.values.shape)
    cond = rng.normal(size=(BATCH, OBS_DIM + ACTION_DIM))
    noise = gen.draw_noise(rng, BATCH)
    batch = {"s_g": cond, "r_g": rng.uniform(-1, 1, BATCH)}
    y = rng.normal(size=BATCH)
    return {
        "dress_generation": _check(lambda acc: generation_loss(cond, gen, critic, noise, acc), gen.param_sets),
        "dress_evaluation": _check(lambda acc: evaluation_loss(batch, critic, y, acc), [critic.q]),
    }


def run_suite(seeds=range(10)) -> list[CheckResult]:
    results = []
    for seed in seeds:
        errors = {**_sac(seed), **_td3(seed, False), **_td3(seed, True), **_reinforce(seed), **_dress(seed)}
        for name, err in errors.items():
            tol = CHAIN_TOLERANCE if name == "dress_generation" else TOLERANCE
            results.append(CheckResult(name, seed, err, tol))
    return results


def summarize(results: list[CheckResult]) -> dict[str, tuple[float, float, bool]]:
    """name -> (worst error over seeds, tolerance, all passed)."""
    out: dict[str, tuple[float, float, bool]] = {}
    for r in results:
        worst, tol, ok = out.get(r.name, (0.0, r.tolerance, True))
        out[r.name] = (max(worst, r.error), tol, ok and r.passed)
    return out
