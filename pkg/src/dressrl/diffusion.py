"""Linear-beta diffusion schedule and the reverse-chain coefficients.

Step indices ``k`` run 1..K as in the usual DDPM notation; arrays are stored
0-based, so ``betas[k - 1]`` is beta_k. ``alpha_bars_prev[k - 1]`` is
alpha_bar_{k-1} with alpha_bar_0 = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STANDARD = "standard"
LITERAL = "literal"


@dataclass(frozen=True)
class DiffusionSchedule:
    K: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    alpha_bars_prev: np.ndarray
    posterior_vars: np.ndarray
    beta_start: float
    beta_end: float

    def coefficients(self, mode: str = STANDARD) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(coef_a, coef_b, sigma) with z_{k-1} = a_k z0_hat + b_k z_k + sigma_k eps.

        ``standard`` is the exact Gaussian posterior mean q(z_{k-1} | z_k, z0).
        ``literal`` uses the alternative printed form
        a_k = sqrt(alpha_{k-1}) (1 - abar_k) / (1 - abar_{k-1}),
        b_k = sqrt(alpha_k) beta_{k-1} / (1 - abar_{k-1}),
        which is undefined at k = 1; there the step returns z0_hat directly.
        sigma_1 is zero in both modes.
        """
        sigma = np.sqrt(self.posterior_vars)
        sigma[0] = 0.0
        if mode == STANDARD:
            denom = 1.0 - self.alpha_bars
            a = np.sqrt(self.alpha_bars_prev) * self.betas / denom
            b = np.sqrt(self.alphas) * (1.0 - self.alpha_bars_prev) / denom
        elif mode == LITERAL:
            a = np.ones(self.K)
            b = np.zeros(self.K)
            for i in range(1, self.K):
                denom = 1.0 - self.alpha_bars[i - 1]
                a[i] = np.sqrt(self.alphas[i - 1]) * (1.0 - self.alpha_bars[i]) / denom
                b[i] = np.sqrt(self.alphas[i]) * self.betas[i - 1] / denom
        else:
            raise ValueError(f"unknown coefficient mode {mode!r}")
        return a, b, sigma

    def to_dict(self) -> dict:
        return {"K": self.K, "beta_start": self.beta_start, "beta_end": self.beta_end}


def build_schedule(K: int, beta_start: float = 1e-4, beta_end: float = 0.2) -> DiffusionSchedule:
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, K)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    alpha_bars_prev = np.concatenate([[1.0], alpha_bars[:-1]])
    posterior_vars = betas * (1.0 - alpha_bars_prev) / (1.0 - alpha_bars)
    return DiffusionSchedule(K, betas, alphas, alpha_bars, alpha_bars_prev, posterior_vars,
                             float(beta_start), float(beta_end))


def forward_noise(z0: np.ndarray, k: int, eps: np.ndarray, schedule: DiffusionSchedule) -> np.ndarray:
    if not 1 <= k <= schedule.K:
        raise ValueError(f"k must lie in [1, {schedule.K}], got {k}")
    ab = schedule.alpha_bars[k - 1]
    return np.sqrt(ab) * np.asarray(z0) + np.sqrt(1.0 - ab) * np.asarray(eps)


def timestep_embedding(k: int, dim: int = 8) -> np.ndarray:
    """Sinusoidal embedding of the integer step ``k``."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    ang = k * freqs
    emb = np.concatenate([np.sin(ang), np.cos(ang)])
    return np.pad(emb, (0, dim - emb.size))
