"""MECLatency: one base station, N mobile users, sparse latency-gated reward.

The agent splits bandwidth, transmit power and compute among users. Each
step the environment evaluates SINR under Rayleigh fading, Shannon
throughput, service latency and a two-case reward: zero whenever any active
user misses the latency limit, otherwise the summed service rate minus
latency and impatience penalties.

Functions here are pure given their inputs (randomness enters only through
an explicit ``numpy.random.Generator``); ``MECLatencyEnv`` wraps them in the
usual ``reset``/``step`` loop.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
import numpy as np

LATENCY_SENTINEL = 1e9


class Case(str, Enum):
    NO_FEEDBACK = "NoFeedback"
    DEGRADED = "Degraded"


@dataclass(frozen=True)
class EnvConfig:
    n_users: int = 3
    B_max: float = 20.0
    P_max: float = 10.0
    C_max: float = 100.0
    M_antennas: int = 4
    alpha_pathloss: float = 3.0
    noise_power: float = 1e-2
    latency_limit: float = 0.02
    lambda_penalty: float = 1.0
    mu_penalty: float = 0.5
    patience_threshold: int = 2
    initial_patience: int = 10
    episode_length: int = 200
    delta_x_max: float = 0.02
    cell_diameter: float = 10.0
    d_min: float = 0.01
    demand_range: tuple[float, float] = (0.01, 0.04)
    throughput_req_range: tuple[float, float] = (0.5, 1.5)
    latency_req_range: tuple[float, float] = (0.02, 0.05)
    clamp_latency_penalty: bool = False
    departed_unserved: bool = True
    end_on_departure: bool = True
    beta_reward: float = 0.2

    def __post_init__(self):
        for name in ("B_max", "P_max", "C_max", "alpha_pathloss", "noise_power", "latency_limit",
                     "cell_diameter", "d_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"EnvConfig.{name} must be > 0")
        if self.M_antennas < 1:
            raise ValueError("EnvConfig.M_antennas must be >= 1")
        if self.episode_length < 1:
            raise ValueError("EnvConfig.episode_length must be >= 1")
        if self.n_users < 0:
            raise ValueError("EnvConfig.n_users must be >= 0")
        if not 0.0 <= self.delta_x_max <= 1.0:
            raise ValueError("EnvConfig.delta_x_max must lie in [0, 1]")
        if self.initial_patience < 1:
            raise ValueError("EnvConfig.initial_patience must be >= 1")
        for name in ("demand_range", "throughput_req_range", "latency_req_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"EnvConfig.{name} must satisfy 0 < lo <= hi")
            object.__setattr__(self, name, (float(lo), float(hi)))

    @property
    def cell_radius(self) -> float:
        return self.cell_diameter / 2.0

    @property
    def obs_dim(self) -> int:
        return 5 * self.n_users

    @property
    def action_dim(self) -> int:
        return 3 * self.n_users

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("demand_range", "throughput_req_range", "latency_req_range"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        known = {f for f in cls.__dataclass_fields__}
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in known}
        return cls(**kw)


@dataclass(frozen=True)
class UserState:
    position: float
    demand: float
    latency_requirement: float
    throughput_requirement: float
    patience: int
    channel_gain: float
    active: bool


@dataclass
class NetworkState:
    """Per-user arrays, indexed by user id; inactive users keep their slot."""

    positions: np.ndarray
    demands: np.ndarray
    latency_req: np.ndarray
    throughput_req: np.ndarray
    patience: np.ndarray
    gains: np.ndarray
    active: np.ndarray
    t: int = 0

    @property
    def users(self) -> list[UserState]:
        return [
            UserState(float(self.positions[i]), float(self.demands[i]), float(self.latency_req[i]),
                      float(self.throughput_req[i]), int(self.patience[i]), float(self.gains[i]),
                      bool(self.active[i]))
            for i in range(self.positions.size)
        ]

    def copy(self) -> "NetworkState":
        return NetworkState(*(getattr(self, f).copy() for f in
                              ("positions", "demands", "latency_req", "throughput_req",
                               "patience", "gains", "active")), t=self.t)


@dataclass
class AllocationAction:
    b: np.ndarray
    p: np.ndarray
    c: np.ndarray

    def validate(self, n_users: int, tol: float = 1e-9) -> None:
        for name in ("b", "p", "c"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (n_users,):
                raise ValueError(f"allocation {name} has shape {v.shape}, expected ({n_users},)")
            if not np.all(np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
                raise ValueError(f"allocation {name} entries must lie in [0, 1]")
            if v.sum() > 1.0 + tol:
                raise ValueError(f"allocation {name} sums to {v.sum():.6g} > 1")


@dataclass
class StepOutcome:
    next_state: NetworkState
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def sample_channel_gain(M: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Sum of M squared magnitudes of unit-power complex Gaussians (Gamma(M, 1))."""
    if M < 1:
        raise ValueError("M must be >= 1")
    shape = (M,) if size is None else (*np.atleast_1d(size), M)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return 0.5 * (re**2 + im**2).sum(axis=-1)


def update_positions(positions: np.ndarray, delta_x_max: float, rng: np.random.Generator) -> np.ndarray:
    delta = rng.uniform(-delta_x_max, delta_x_max, size=positions.shape)
    return apply_displacement(positions, delta)


def apply_displacement(positions: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(positions + delta, 0.0), 1.0)


def distances(positions: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Normalised position -> km, floored at ``d_min`` to keep D^-alpha finite."""
    return np.maximum(np.asarray(positions) * config.cell_radius, config.d_min)


def compute_sinr(p: np.ndarray, gains: np.ndarray, positions: np.ndarray, config: EnvConfig) -> np.ndarray:
    # scalar libm pow: numpy's SIMD pow differs by an ulp on some inputs and
    # some CPUs, which at SINR ~1e8 is visible in traces
    path = np.array([math.pow(d, -config.alpha_pathloss) for d in distances(positions, config).ravel()])
    rx = np.asarray(p) * config.P_max * path.reshape(np.shape(positions)) * gains
    # sum the other users directly; total-minus-self cancels badly when one
    # user near the base station dominates
    others = ~np.eye(rx.size, dtype=bool)
    interference = np.where(others, rx[None, :], 0.0).sum(axis=1)
    return rx / (interference + config.noise_power)


def compute_throughput(b: np.ndarray, sinr: np.ndarray, B_max: float) -> np.ndarray:
    return np.asarray(b) * B_max * np.log2(1.0 + np.asarray(sinr))


def compute_latency(d, T, c, C_max: float):
    d, T, c = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (d, T, c)))
    ok = (T > 0.0) & (c > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lat = np.where(ok, d / np.where(ok, T, 1.0) + d / np.where(ok, c * C_max, 1.0), LATENCY_SENTINEL)
    lat = np.minimum(lat, LATENCY_SENTINEL)
    return lat if lat.ndim else float(lat)


def service_rate(latency):
    return 1.0 / np.asarray(latency, dtype=np.float64)


def compute_reward(latencies, service_rates, patience, config: EnvConfig) -> tuple[float, Case]:
    """Two-case reward over the given (active) users."""
    L = np.asarray(latencies, dtype=np.float64)
    if L.size == 0 or np.any(L > config.latency_limit):
        return 0.0, Case.NO_FEEDBACK
    excess = L - config.latency_limit
    if config.clamp_latency_penalty:
        excess = np.maximum(excess, 0.0)
    mu = np.where(np.asarray(patience) <= config.patience_threshold, config.mu_penalty, 0.0)
    r = float(np.sum(service_rates) - config.lambda_penalty * np.sum(excess) - np.sum(mu))
    return r, Case.DEGRADED


def project_action(raw: np.ndarray, n_users: int | None = None) -> AllocationAction:
    """Map a [-1, 1]^{3N} network output onto the three resource simplices.

    Layout is ``[b_1..b_N, p_1..p_N, c_1..c_N]``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    n = raw.size // 3 if n_users is None else n_users
    if raw.size != 3 * n:
        raise ValueError(f"raw action length {raw.size} is not 3 * {n}")
    frac = (np.clip(raw, -1.0, 1.0) + 1.0) / 2.0
    blocks = frac.reshape(3, n)
    blocks = blocks / np.maximum(1.0, blocks.sum(axis=1, keepdims=True))
    return AllocationAction(blocks[0].copy(), blocks[1].copy(), blocks[2].copy())


def reset(config: EnvConfig, seed: int | np.random.Generator) -> NetworkState:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = config.n_users
    return NetworkState(
        positions=rng.uniform(0.0, 1.0, n),
        demands=rng.uniform(*config.demand_range, n),
        latency_req=rng.uniform(*config.latency_req_range, n),
        throughput_req=rng.uniform(*config.throughput_req_range, n),
        patience=np.full(n, config.initial_patience, dtype=np.int64),
        gains=sample_channel_gain(config.M_antennas, rng, n) if n else np.zeros(0),
        active=np.ones(n, dtype=bool),
        t=0,
    )


def evaluate_allocation(state: NetworkState, action: AllocationAction, config: EnvConfig) -> dict:
    """SINR -> throughput -> latency -> service rate -> reward for one state.

    Inactive users are silent (no power, no interference) and their latency
    is logged as the sentinel. With ``departed_unserved`` (the default) a
    departed user counts as unserved, which pins every later step of the
    episode in Case 1; otherwise departed users drop out of the reward.
    """
    act = state.active
    p = np.where(act, action.p, 0.0)
    b = np.where(act, action.b, 0.0)
    c = np.where(act, action.c, 0.0)
    sinr = compute_sinr(p, state.gains, state.positions, config)
    T = compute_throughput(b, sinr, config.B_max)
    L = np.where(act, compute_latency(state.demands, T, c, config.C_max), LATENCY_SENTINEL)
    S = np.where(act, service_rate(L), 0.0)
    if config.departed_unserved:
        r, case = compute_reward(L, S, state.patience, config)
    else:
        r, case = compute_reward(L[act], S[act], state.patience[act], config)
    return {"sinr": sinr, "throughputs": T, "latencies": L, "service_rates": S,
            "reward": r, "case": case}


def step(state: NetworkState, action: AllocationAction, config: EnvConfig,
         rng: np.random.Generator) -> StepOutcome:
    n = config.n_users
    action.validate(n)
    ev = evaluate_allocation(state, action, config)
    nxt = state.copy()
    T, L = ev["throughputs"], ev["latencies"]
    unhappy = nxt.active & ((T < nxt.throughput_req) | (L > nxt.latency_req))
    nxt.patience = np.where(unhappy, np.maximum(nxt.patience - 1, 0), nxt.patience)
    nxt.active = nxt.active & (nxt.patience > 0)
    nxt.positions = update_positions(nxt.positions, config.delta_x_max, rng)
    nxt.gains = sample_channel_gain(config.M_antennas, rng, n) if n else np.zeros(0)
    nxt.t = state.t + 1
    departed = bool((state.active & ~nxt.active).any())
    # once someone is unserved every remaining reward is exactly 0, so ending
    # here leaves the episode return unchanged
    terminal = not nxt.active.any() or (config.end_on_departure and departed)
    done = nxt.t >= config.episode_length or terminal
    info = {k: ev[k] for k in ("sinr", "throughputs", "latencies", "service_rates", "case")}
    info["departed"] = departed
    info["terminal"] = terminal
    return StepOutcome(nxt, ev["reward"], bool(done), info)


def _norms(config: EnvConfig) -> np.ndarray:
    return np.array([float(config.M_antennas), config.demand_range[1], config.latency_req_range[1],
                     float(config.initial_patience), 1.0])


def encode_observation(state: NetworkState, config: EnvConfig) -> np.ndarray:
    """Per user ``[g/M, d/d_max, L_req/L_req_max, rho/rho_init, x]``; inactive users zeroed."""
    feats = np.stack([state.gains, state.demands, state.latency_req,
                      state.patience.astype(np.float64), state.positions], axis=1) if config.n_users else \
        np.zeros((0, 5))
    feats = feats / _norms(config)
    feats[~state.active] = 0.0
    return feats.ravel()


def decode_observation(obs: np.ndarray, config: EnvConfig) -> dict:
    feats = np.asarray(obs, dtype=np.float64).reshape(config.n_users, 5) * _norms(config)
    return {"gains": feats[:, 0], "demands": feats[:, 1], "latency_req": feats[:, 2],
            "patience": feats[:, 3], "positions": feats[:, 4]}


TRACE_FIELDS_PER_USER = ("x", "g", "d", "rho", "active", "b", "p", "c", "sinr", "T", "L", "S")


class TraceWriter:
    """CSV trace of env steps with enough inputs to recompute every quantity.

    The first line is ``# config: {json}``; then a header and one row per step.
    """

    def __init__(self, path, config: EnvConfig):
        self.config = config
        self._fh = open(path, "w", newline="")
        self._fh.write("# config: " + json.dumps(config.to_dict(), sort_keys=True) + "\n")
        self._w = csv.writer(self._fh)
        cols = ["t"]
        for i in range(config.n_users):
            cols += [f"{f}_{i}" for f in TRACE_FIELDS_PER_USER]
        cols += ["r_E", "case"]
        self._w.writerow(cols)

    def write(self, state: NetworkState, action: AllocationAction, outcome: StepOutcome) -> None:
        info = outcome.info
        row: list = [state.t]
        for i in range(self.config.n_users):
            row += [repr(float(state.positions[i])), repr(float(state.gains[i])),
                    repr(float(state.demands[i])), int(state.patience[i]), int(state.active[i]),
                    repr(float(action.b[i])), repr(float(action.p[i])), repr(float(action.c[i])),
                    repr(float(info["sinr"][i])), repr(float(info["throughputs"][i])),
                    repr(float(info["latencies"][i])), repr(float(info["service_rates"][i]))]
        row += [repr(float(outcome.reward)), info["case"].value]
        self._w.writerow(row)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class MECLatencyEnv:
    """Gym-style wrapper: raw [-1, 1] actions in, encoded observations out."""

    def __init__(self, config: EnvConfig | None = None, trace: TraceWriter | None = None):
        self.config = config or EnvConfig()
        self.rng = np.random.default_rng(0)
        self.state: NetworkState | None = None
        self.trace = trace

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    def reset(self, rng: np.random.Generator | int) -> np.ndarray:
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.state = reset(self.config, self.rng)
        return encode_observation(self.state, self.config)

    def step(self, raw_action: np.ndarray):
        action = project_action(raw_action, self.config.n_users)
        out = step(self.state, action, self.config, self.rng)
        if self.trace is not None:
            self.trace.write(self.state, action, out)
        self.state = out.next_state
        info = dict(out.info)
        info["case1"] = out.info["case"] is Case.NO_FEEDBACK
        return encode_observation(self.state, self.config), out.reward, out.done, info

    def with_config(self, **changes) -> "MECLatencyEnv":
        return MECLatencyEnv(replace(self.config, **changes), self.trace)


def random_policy_case1_fraction(config: EnvConfig, n_steps: int, seed: int = 0) -> float:
    """Fraction of Case-1 steps under uniform random raw actions."""
    rng = np.random.default_rng(seed)
    env = MECLatencyEnv(config)
    env.reset(rng)
    hits = 0
    for _ in range(n_steps):
        _, _, done, info = env.step(rng.uniform(-1.0, 1.0, config.action_dim))
        hits += info["case1"]
        if done:
            env.reset(rng)
    return hits / n_steps

