"""Training loop for (DRESSed-)DRL runs, seeded streams and metrics output."""

from __future__ import annotations

import csv
import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .agents import ReinforceAgent, ReinforceConfig, SacAgent, SacConfig, Td3Agent, Td3Config, make_ddpg
from .buffers import ReplayBuffer
from .config import RunConfig, dump_config
from .dress import DressShaper, combine_rewards
from .mountaincar import MountainCarEnv
from .nn import save_checkpoint
from .wireless import MECLatencyEnv, TraceWriter

log = logging.getLogger(__name__)

STREAM_NAMES = ("env", "policy", "dress", "eval")
METRICS_FIELDS = ("step", "episode_return_env", "episode_return_aux", "episode_len", "case1_fraction", "wall_ms")


@dataclass
class MetricsRecord:
    step: int
    episode_return_env: float
    episode_return_aux: float
    episode_len: int
    case1_fraction: float
    wall_ms: int = 0


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode())


def rng_streams(seed: int, names=STREAM_NAMES) -> dict[str, np.random.Generator]:
    """Independent generators keyed by name; drawing from one never moves another."""
    return {n: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream_key(n),))) for n in names}


def make_env(cfg: RunConfig, trace: TraceWriter | None = None):
    if cfg.env == "meclatency":
        return MECLatencyEnv(cfg.resolved_env(), trace)
    return MountainCarEnv(cfg.max_episode_steps or 999)


def make_agent(cfg: RunConfig, obs_dim: int, action_dim: int, rng: np.random.Generator):
    a = cfg.agent
    if cfg.algo == "sac":
        return SacAgent(obs_dim, action_dim, SacConfig(a.hidden, a.activation, a.gamma, a.tau, a.lr_actor,
                                                       a.lr_critic, a.alpha, a.auto_alpha), rng)
    if cfg.algo == "td3":
        return Td3Agent(obs_dim, action_dim, Td3Config(a.hidden, a.activation, a.gamma, a.tau, a.lr_actor,
                                                       a.lr_critic), rng)
    if cfg.algo == "ddpg":
        return make_ddpg(obs_dim, action_dim, rng, hidden=a.hidden, activation=a.activation, gamma=a.gamma,
                         tau=a.tau, lr_actor=a.lr_actor, lr_critic=a.lr_critic)
    return ReinforceAgent(obs_dim, action_dim, ReinforceConfig(a.hidden, a.activation, a.gamma, a.lr_actor), rng)


@dataclass
class RunResult:
    records: list[MetricsRecord]
    agent: object
    shaper: DressShaper | None
    actions: list[np.ndarray]
    eval_records: list[tuple[int, float]]
    wall_ms: int


def run_training(cfg: RunConfig, trace_hook: Callable[[str, int], None] | None = None,
                 keep_actions: bool = False) -> RunResult:
    """Run one configuration end to end.

    Per environment step: act, step, generate (DRESS), combine, store, then
    update (after warmup). ``trace_hook(event, step)`` observes that order.
    """
    cfg.validate()
    started = time.perf_counter()
    hook = trace_hook or (lambda event, t: None)
    streams = rng_streams(cfg.seed)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    trace = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if cfg.trace_env and cfg.env == "meclatency":
            trace = TraceWriter(out_dir / "env_trace.csv", cfg.resolved_env())
    env = make_env(cfg, trace)
    agent = make_agent(cfg, env.obs_dim, env.action_dim, streams["policy"])
    shaper = DressShaper(env.obs_dim, env.action_dim, cfg.resolved_dress(), streams["dress"]) \
        if cfg.dress_enabled else None
    on_policy = getattr(agent, "on_policy", False)
    buf = ReplayBuffer(cfg.buffer_capacity, {"s": (env.obs_dim,), "a": (env.action_dim,),
                                             "s_next": (env.obs_dim,), "r": (), "done": ()})
    policy_rng, dress_rng = streams["policy"], streams["dress"]

    records: list[MetricsRecord] = []
    eval_records: list[tuple[int, float]] = []
    actions = []
    ep = {"ret_env": 0.0, "ret_aux": 0.0, "len": 0, "case1": 0, "s": [], "a": [], "r": [], "t0": time.perf_counter()}

    def update_round():
        if shaper is not None and shaper.ready():
            shaper.update(dress_rng)
        if not on_policy and len(buf) >= cfg.batch_size:
            agent.update(buf.sample(cfg.batch_size, policy_rng), policy_rng)
        hook("update", step)

    obs = env.reset(streams["env"]) if cfg.total_steps > 0 else None
    for step in range(cfg.total_steps):
        if not on_policy and step < cfg.warmup_steps:
            action = policy_rng.uniform(-1.0, 1.0, env.action_dim)
        else:
            action = agent.select_action(obs, "train", policy_rng)
        hook("act", step)
        next_obs, r_e, done, info = env.step(action)
        hook("step", step)
        r_e_scaled = r_e * cfg.reward_scale
        if shaper is not None:
            r_g = shaper.reward(obs, action, dress_rng)
            hook("generate", step)
            r_total = combine_rewards(r_e_scaled, r_g, cfg.beta)
        else:
            r_g = 0.0
            r_total = r_e_scaled
        hook("combine", step)
        terminal = float(info["terminal"])
        if on_policy:
            ep["s"].append(obs), ep["a"].append(action), ep["r"].append(r_total)
        else:
            buf.push(s=obs, a=action, s_next=next_obs, r=r_total, done=terminal)
        if shaper is not None:
            shaper.observe(obs, action, r_g, next_obs, r_e_scaled, bool(terminal))
        hook("store", step)
        if keep_actions:
            actions.append(np.array(action))

        ep["ret_env"] += r_e
        ep["ret_aux"] += r_g
        ep["len"] += 1
        ep["case1"] += bool(info.get("case1", False))

        if cfg.update_mode == "step" and step >= cfg.warmup_steps:
            update_round()

        if done:
            if shaper is not None:
                shaper.end_episode()
            if on_policy:
                agent.update(np.array(ep["s"]), np.array(ep["a"]), np.array(ep["r"]))
            if cfg.update_mode == "episode" and step >= cfg.warmup_steps:
                for _ in range(ep["len"]):
                    update_round()
            wall = int(1000 * (time.perf_counter() - ep["t0"])) if cfg.record_wall_ms else 0
            records.append(MetricsRecord(step + 1, ep["ret_env"], ep["ret_aux"], ep["len"],
                                         ep["case1"] / ep["len"], wall))
            ep.update(ret_env=0.0, ret_aux=0.0, len=0, case1=0, s=[], a=[], r=[], t0=time.perf_counter())
            if records[-1].episode_return_env > cfg.stop_at_return:
                break
            obs = env.reset(streams["env"])
        else:
            obs = next_obs

        if cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            eval_records.append((step + 1, evaluate_policy(cfg, agent, streams["eval"], cfg.eval_episodes)))

    if trace is not None:
        trace.close()
    wall_ms = int(1000 * (time.perf_counter() - started))
    result = RunResult(records, agent, shaper, actions, eval_records, wall_ms)
    if out_dir is not None:
        write_run(out_dir, cfg, result)
    return result


def evaluate_policy(cfg: RunConfig, agent, rng: np.random.Generator, episodes: int = 1) -> float:
    env = make_env(cfg)
    total = 0.0
    for _ in range(episodes):
        obs = env.reset(rng)
        done = False
        while not done:
            obs, r, done, _ = env.step(agent.select_action(obs, "eval"))
            total += r
    return total / max(episodes, 1)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def emit_metrics(records: list[MetricsRecord], path: str | Path) -> Path:
    """One row per episode, header exactly ``METRICS_FIELDS``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_FIELDS)
        for rec in records:
            w.writerow([_fmt(getattr(rec, f)) for f in METRICS_FIELDS])
    return path


def read_metrics(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricsRecord(int(r["step"]), float(r["episode_return_env"]), float(r["episode_return_aux"]),
                          int(r["episode_len"]), float(r["case1_fraction"]), int(r["wall_ms"])) for r in rows]


def write_run(out_dir: Path, cfg: RunConfig, result: RunResult) -> None:
    emit_metrics(result.records, out_dir / "metrics.csv")
    (out_dir / "config.ini").write_text(dump_config(cfg))
    with open(out_dir / "timing.json", "w") as fh:
        json.dump({"wall_ms": result.wall_ms}, fh)
    if result.eval_records:
        with open(out_dir / "eval.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "eval_return"])
            w.writerows([[s, _fmt(r)] for s, r in result.eval_records])
    if cfg.save_checkpoint:
        named = {f"agent.{k}": v for k, v in result.agent.named_params().items()}
        if result.shaper is not None:
            named.update({f"dress.{k}": v for k, v in result.shaper.named_params().items()})
        extra = {"config_version": 1}
        if result.shaper is not None:
            extra["schedule"] = result.shaper.gen.schedule.to_dict()
            extra["coef_mode"] = result.shaper.config.coef_mode
        save_checkpoint(out_dir / "checkpoint.npz", named, extra)


def smoothed_returns(records: list[MetricsRecord], window: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """(steps, trailing moving average of episode env returns)."""
    if not records:
        return np.zeros(0, dtype=int), np.zeros(0)
    steps = np.array([r.step for r in records])
    rets = np.array([r.episode_return_env for r in records])
    csum = np.concatenate([[0.0], np.cumsum(rets)])
    idx = np.arange(1, rets.size + 1)
    lo = np.maximum(idx - window, 0)
    return steps, (csum[idx] - csum[lo]) / (idx - lo)


def smoothed_at(records: list[MetricsRecord], step: int, window: int = 10) -> float:
    """Smoothed return of the episodes finished by ``step`` (0 if none)."""
    steps, sm = smoothed_returns(records, window)
    done = np.nonzero(steps <= step)[0]
    return float(sm[done[-1]]) if done.size else 0.0


def steps_to_reach(records: list[MetricsRecord], level: float, window: int = 10) -> float:
    """First step at which the smoothed return reaches ``level`` (inf if never)."""
    steps, sm = smoothed_returns(records, window)
    hit = np.nonzero(sm >= level)[0]
    return float(steps[hit[0]]) if hit.size else float("inf")


def record_dicts(records: list[MetricsRecord]) -> list[dict]:
    return [asdict(r) for r in records]

