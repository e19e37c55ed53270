"""Dense networks with hand-written backprop, Adam, soft updates and a
tanh-squashed Gaussian head.

Every network keeps its parameters in one flat vector (``ParamSet``) and a
shape table derived from its ``MlpSpec``. Inputs may be a single vector or a
``(batch, dim)`` array; outputs follow the same convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG2 = np.log(2.0)


class ShapeError(ValueError):
    """Raised when array dimensions disagree with a network spec."""


class NonFiniteError(FloatingPointError):
    """Raised when an update would write NaN/inf into parameters."""


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ShapeError(f"all layer dims must be >= 1, got {dims}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.hidden_activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        """(weight shape, bias shape) per layer; weights are (in, out)."""
        d = self.layer_dims
        return [((d[i], d[i + 1]), (d[i + 1],)) for i in range(len(d) - 1)]

    @property
    def n_params(self) -> int:
        return sum(w[0] * w[1] + b[0] for w, b in self.shapes())


@dataclass
class ParamSet:
    """Flat parameter vector with its gradient and Adam moments."""

    values: np.ndarray
    grads: np.ndarray = field(default=None)
    adam_m: np.ndarray = field(default=None)
    adam_v: np.ndarray = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.values.shape
        if self.grads is None:
            self.grads = np.zeros(n)
        if self.adam_m is None:
            self.adam_m = np.zeros(n)
        if self.adam_v is None:
            self.adam_v = np.zeros(n)
        if not (self.grads.shape == self.adam_m.shape == self.adam_v.shape == n):
            raise ShapeError("values, grads and Adam moments must share one length")

    def __len__(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        self.grads[:] = 0.0

    def copy(self) -> "ParamSet":
        return ParamSet(
            self.values.copy(),
            self.grads.copy(),
            self.adam_m.copy(),
            self.adam_v.copy(),
            self.step_count,
        )


def init_params(spec: MlpSpec, rng: np.random.Generator, out_scale: float = 1.0) -> ParamSet:
    """Uniform(+-1/sqrt(fan_in)) weights and biases.

    ``out_scale`` shrinks the final layer (weights and bias), which keeps
    fresh policy and reward heads near zero output; 0 makes it exactly zero.
    """
    chunks = []
    shapes = spec.shapes()
    for i, (w_shape, b_shape) in enumerate(shapes):
        bound = 1.0 / np.sqrt(w_shape[0])
        w = rng.uniform(-bound, bound, size=w_shape)
        b = rng.uniform(-bound, bound, size=b_shape)
        if i == len(shapes) - 1:
            w, b = w * out_scale, b * out_scale
        chunks.append(w.ravel())
        chunks.append(b)
    return ParamSet(np.concatenate(chunks))


def zeros_params(spec: MlpSpec) -> ParamSet:
    return ParamSet(np.zeros(spec.n_params))


def unpack(spec: MlpSpec, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views into ``flat`` as per-layer (W, b); no copies."""
    if flat.size != spec.n_params:
        raise ShapeError(f"expected {spec.n_params} parameters, got {flat.size}")
    layers = []
    i = 0
    for w_shape, b_shape in spec.shapes():
        nw = w_shape[0] * w_shape[1]
        w = flat[i : i + nw].reshape(w_shape)
        i += nw
        b = flat[i : i + b_shape[0]]
        i += b_shape[0]
        layers.append((w, b))
    return layers


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != dim:
        raise ShapeError(f"{what}: expected trailing dim {dim}, got shape {x.shape}")
    return xb, single


@dataclass
class ForwardCache:
    inputs: np.ndarray
    # pre-activations and activations of each hidden layer
    pre: list[np.ndarray]
    post: list[np.ndarray]
    single: bool


def forward_cached(spec: MlpSpec, params: ParamSet, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    xb, single = _as_batch(x, spec.input_dim, "mlp input")
    layers = unpack(spec, params.values)
    h = xb
    pre, post = [], []
    for w, b in layers[:-1]:
        z = h @ w + b
        h = np.maximum(z, 0.0) if spec.hidden_activation == "relu" else np.tanh(z)
        pre.append(z)
        post.append(h)
    w, b = layers[-1]
    out = h @ w + b
    cache = ForwardCache(xb, pre, post, single)
    return (out[0] if single else out), cache


def backward_cached(
    spec: MlpSpec,
    params: ParamSet,
    cache: ForwardCache,
    upstream: np.ndarray,
    accumulate: bool = True,
) -> np.ndarray:
    """Backprop ``upstream`` (dL/d output) through a cached forward pass.

    Adds dL/dparams into ``params.grads`` unless ``accumulate`` is False and
    returns dL/d input with the same batch convention as the forward input.
    """
    g, _ = _as_batch(upstream, spec.output_dim, "upstream grad")
    if g.shape[0] != cache.inputs.shape[0]:
        raise ShapeError("upstream batch size differs from cached forward batch")
    layers = unpack(spec, params.values)
    grads = unpack(spec, params.grads) if accumulate else None
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        h_in = cache.post[li - 1] if li > 0 else cache.inputs
        if accumulate:
            gw, gb = grads[li]
            gw += h_in.T @ g
            gb += g.sum(axis=0)
        g = g @ w.T
        if li > 0:
            if spec.hidden_activation == "relu":
                g = g * (cache.pre[li - 1] > 0.0)
            else:
                g = g * (1.0 - cache.post[li - 1] ** 2)
    return g[0] if cache.single else g


def mlp_forward(spec: MlpSpec, params: ParamSet, x: np.ndarray) -> np.ndarray:
    return forward_cached(spec, params, x)[0]


def mlp_backward(
    spec: MlpSpec, params: ParamSet, x: np.ndarray, upstream: np.ndarray, accumulate: bool = True
) -> np.ndarray:
    """Recompute the forward pass and backprop ``upstream`` through it."""
    _, cache = forward_cached(spec, params, x)
    return backward_cached(spec, params, cache, upstream, accumulate)


def adam_step(
    params: ParamSet,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamSet:
    """In-place bias-corrected Adam step; gradients are zeroed afterwards."""
    g = params.grads
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("refusing Adam step on non-finite gradients")
    params.step_count += 1
    t = params.step_count
    params.adam_m *= beta1
    params.adam_m += (1.0 - beta1) * g
    params.adam_v *= beta2
    params.adam_v += (1.0 - beta2) * g * g
    m_hat = params.adam_m / (1.0 - beta1**t)
    v_hat = params.adam_v / (1.0 - beta2**t)
    params.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
    params.zero_grad()
    return params


def soft_update(target: ParamSet, source: ParamSet, tau: float) -> ParamSet:
    if len(target) != len(source):
        raise ShapeError(f"soft update length mismatch: {len(target)} vs {len(source)}")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if tau == 1.0:
        target.values[:] = source.values
    else:
        target.values += tau * (source.values - target.values)
    return target


def log1m_tanh_sq(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), stable for large |u|."""
    return 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class GaussianHeadOutput:
    mean: np.ndarray
    log_std: np.ndarray
    sample: np.ndarray
    log_prob: np.ndarray  # summed over the last axis
    pre_tanh: np.ndarray
    noise: np.ndarray
    scale: float = 1.0
    bias: float = 0.0

    def backward(self, d_sample: np.ndarray, d_log_prob: np.ndarray | float = 0.0):
        """Gradients of a downstream loss w.r.t. (mean, log_std).

        ``d_log_prob`` has the shape of ``log_prob`` (one value per row). The
        noise is held fixed, as in the reparameterisation trick.
        """
        y = np.tanh(self.pre_tanh)
        std = np.exp(self.log_std)
        dlp = np.asarray(d_log_prob, dtype=np.float64)
        if dlp.ndim == self.mean.ndim - 1 and dlp.ndim > 0:
            dlp = dlp[..., None]
        # d sample/du = s (1 - y^2); d logp/du = 2y (tanh correction);
        # d logp/d log_std = -1 from the Gaussian normaliser.
        d_u = d_sample * self.scale * (1.0 - y * y) + dlp * 2.0 * y
        d_mean = d_u
        d_log_std = d_u * std * self.noise - dlp
        return d_mean, d_log_std


def clip_log_std(raw: np.ndarray, lo: float = LOG_STD_MIN, hi: float = LOG_STD_MAX) -> np.ndarray:
    return np.clip(raw, lo, hi)


def clip_grad_mask(raw: np.ndarray, lo: float = LOG_STD_MIN, hi: float = LOG_STD_MAX) -> np.ndarray:
    return ((raw >= lo) & (raw <= hi)).astype(np.float64)


def gaussian_tanh_sample(
    mean: np.ndarray,
    log_std: np.ndarray,
    noise: np.ndarray,
    scale: float = 1.0,
    bias: float = 0.0,
) -> GaussianHeadOutput:
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if not (mean.shape == log_std.shape == noise.shape):
        raise ShapeError(f"mean/log_std/noise shapes differ: {mean.shape}, {log_std.shape}, {noise.shape}")
    u = mean + np.exp(log_std) * noise
    sample = np.tanh(u) * scale + bias
    log_prob = -0.5 * noise**2 - log_std - _HALF_LOG_2PI - (np.log(abs(scale)) + log1m_tanh_sq(u))
    return GaussianHeadOutput(mean, log_std, sample, log_prob.sum(axis=-1), u, noise, scale, bias)


def tanh_gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray, eps: float = 1e-6):
    """Log-density of an already squashed action in (-1, 1).

    Returns ``(log_prob, d_mean, d_log_std)`` where the derivatives are of the
    row-summed log-prob with the action held fixed.
    """
    a = np.clip(action, -1.0 + eps, 1.0 - eps)
    u = np.arctanh(a)
    std = np.exp(log_std)
    z = (u - mean) / std
    lp = -0.5 * z**2 - log_std - _HALF_LOG_2PI - log1m_tanh_sq(u)
    return lp.sum(axis=-1), z / std, z**2 - 1.0


def flat_loss_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (x restored after)."""
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f(x)
        x.flat[i] = old - h
        fm = f(x)
        x.flat[i] = old
        g.flat[i] = (fp - fm) / (2.0 * h)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a| + |n|, floor) over elements."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))


def finite_diff_check(
    spec: MlpSpec,
    params: ParamSet,
    x: np.ndarray,
    h: float = 1e-5,
    upstream: np.ndarray | None = None,
) -> float:
    """Max relative error between ``mlp_backward`` and central differences.

    The probed scalar is ``sum(upstream * output)``; ``upstream`` defaults to
    ones.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    out = mlp_forward(spec, params, x)
    up = np.ones_like(out) if upstream is None else np.asarray(upstream, dtype=np.float64)
    probe = params.copy()
    probe.zero_grad()
    mlp_backward(spec, probe, x, up)
    analytic = probe.grads.copy()

    def f(v):
        probe.values = v
        return float(np.sum(up * mlp_forward(spec, probe, x)))

    numeric = flat_loss_grad(f, probe.values.copy(), h)
    return relative_error(analytic, numeric)


def check_gradients(
    loss_fn: Callable[[], float],
    grad_fn: Callable[[], Sequence[np.ndarray]],
    params: Sequence[ParamSet],
    h: float = 1e-5,
) -> float:
    """Generic finite-difference check for composite losses.

    ``grad_fn`` must return analytic gradients (one array per ParamSet) for
    the current parameter values without modifying them; ``loss_fn``
    evaluates the same loss. Returns the worst relative error.
    """
    analytic = [np.array(g, dtype=np.float64) for g in grad_fn()]
    worst = 0.0
    for p, ga in zip(params, analytic):

        def f(v, p=p):
            p.values = v
            return loss_fn()

        base = p.values
        gn = flat_loss_grad(f, base.copy(), h)
        p.values = base
        worst = max(worst, relative_error(ga, gn))
    return worst


CHECKPOINT_FORMAT = "dressrl-params"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, named: dict[str, tuple[MlpSpec, ParamSet]], extra: dict | None = None) -> None:
    """Write flat parameter vectors (plus Adam state) and a JSON manifest to ``.npz``."""
    import json

    manifest = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "entries": {}, "extra": extra or {}}
    arrays = {}
    for name, (spec, p) in named.items():
        manifest["entries"][name] = {
            "input_dim": spec.input_dim, "hidden_dims": list(spec.hidden_dims),
            "output_dim": spec.output_dim, "hidden_activation": spec.hidden_activation,
            "n_params": spec.n_params, "step_count": p.step_count,
            "shapes": [[list(w), list(b)] for w, b in spec.shapes()],
        }
        arrays[f"{name}.values"] = p.values
        arrays[f"{name}.adam_m"] = p.adam_m
        arrays[f"{name}.adam_v"] = p.adam_v
    np.savez(path, manifest=np.array(json.dumps(manifest, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[dict[str, tuple[MlpSpec, ParamSet]], dict]:
    import json

    with np.load(path) as f:
        manifest = json.loads(str(f["manifest"]))
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
        if manifest["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"{path}: checkpoint version {manifest['version']} is newer than supported")
        out = {}
        for name, e in manifest["entries"].items():
            spec = MlpSpec(e["input_dim"], tuple(e["hidden_dims"]), e["output_dim"], e["hidden_activation"])
            p = ParamSet(f[f"{name}.values"].copy(), None, f[f"{name}.adam_m"].copy(),
                         f[f"{name}.adam_v"].copy(), e["step_count"])
            if len(p) != spec.n_params:
                raise ShapeError(f"{path}: entry {name} has {len(p)} values, manifest says {spec.n_params}")
            out[name] = (spec, p)
    return out, manifest["extra"]
