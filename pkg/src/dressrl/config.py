"""Run configuration: dataclasses plus an INI-style text format.

Sections ``[run]``, ``[env]``, ``[agent]``, ``[dress]`` and ``[sweep]``;
keys are the dataclass field names. Tuples are comma-separated.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .dress import DressConfig
from .wireless import EnvConfig

CONFIG_VERSION = 1
ENVS = ("meclatency", "mountaincar")
ALGOS = ("sac", "td3", "ddpg", "reinforce")


@dataclass(frozen=True)
class AgentConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    alpha: float = 0.2
    auto_alpha: bool = False


@dataclass(frozen=True)
class SweepConfig:
    betas: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    Ks: tuple[int, ...] = (3, 5, 9, 15)
    latency_limits: tuple[float, ...] = (0.02, 0.01)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    include_baseline: bool = True
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    env: str = "meclatency"
    algo: str = "sac"
    dress_enabled: bool = True
    beta: float = 0.2
    K: int = 5
    latency_limit: float = 0.02
    total_steps: int = 20_000
    seed: int = 0
    warmup_steps: int = 500
    batch_size: int = 128
    buffer_capacity: int = 50_000
    update_mode: str = "step"
    reward_scale: float = 1e-2
    eval_every: int = 0
    eval_episodes: int = 1
    max_episode_steps: int = 0
    stop_at_return: float = math.inf
    out_dir: str = ""
    record_wall_ms: bool = False
    save_checkpoint: bool = False
    trace_env: bool = False
    env_config: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    dress: DressConfig = field(default_factory=DressConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self) -> "RunConfig":
        if self.env not in ENVS:
            raise ValueError(f"env must be one of {ENVS}, got {self.env!r}")
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.latency_limit <= 0:
            raise ValueError("latency_limit must be > 0")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("need 1 <= batch_size <= buffer_capacity")
        if self.update_mode not in ("step", "episode"):
            raise ValueError("update_mode must be 'step' or 'episode'")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be > 0")
        return self

    def resolved_env(self) -> EnvConfig:
        return replace(self.env_config, latency_limit=self.latency_limit, beta_reward=self.beta)

    def resolved_dress(self) -> DressConfig:
        return replace(self.dress, K=self.K, batch_size=self.batch_size,
                       capacity=self.buffer_capacity)

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_SECTIONS = {"env": "env_config", "agent": "agent", "dress": "dress", "sweep": "sweep"}


def _coerce(value: str, like: Any, annotation: str) -> Any:
    value = value.strip()
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(like, tuple):
        items = [v.strip() for v in value.strip("()[]").split(",") if v.strip()]
        elem_float = "float" in annotation
        return tuple(float(v) if elem_float else int(v) if v.lstrip("-").isdigit() else float(v) for v in items)
    if isinstance(like, int):
        return int(float(value))
    if isinstance(like, float):
        return float(value)
    if like is None:
        return None if value.lower() in ("", "none") else float(value)
    return value


def _apply(obj, items: dict[str, str], section: str):
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, raw in items.items():
        if key not in known:
            raise KeyError(f"unknown key {key!r} in section [{section}]")
        changes[key] = _coerce(raw, getattr(obj, key), str(known[key].type))
    return replace(obj, **changes)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    cfg = RunConfig()
    if cp.has_section("run"):
        items = dict(cp.items("run"))
        items.pop("version", None)
        cfg = _apply(cfg, items, "run")
    for section, attr in _SECTIONS.items():
        if cp.has_section(section):
            cfg = replace(cfg, **{attr: _apply(getattr(cfg, attr), dict(cp.items(section)), section)})
    return cfg.validate()


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    run = {"version": str(CONFIG_VERSION)}
    for f in fields(cfg):
        if f.name in _SECTIONS.values():
            continue
        run[f.name] = _fmt(getattr(cfg, f.name))
    cp["run"] = run
    for section, attr in _SECTIONS.items():
        sub = getattr(cfg, attr)
        cp[section] = {f.name: _fmt(getattr(sub, f.name)) for f in dataclasses.fields(sub)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
