"""Differentially private optimization: Poisson sampling, clipping, noising, DP-Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DpOptimConfig",
    "OptimizerState",
    "DpOptimError",
    "poisson_sample",
    "clip",
    "noised_sum",
    "dp_adam_step",
]

_CLIP_TOL = 1e-9


class DpOptimError(ValueError):
    pass


@dataclass(frozen=True)
class DpOptimConfig:
    clip_norm: float = 1.0
    noise_multiplier: float = 0.0
    batch_size: int = 64  # expected batch size B under Poisson sampling
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise DpOptimError("clip_norm must be > 0")
        if self.noise_multiplier < 0:
            raise DpOptimError("noise_multiplier must be >= 0")
        if self.batch_size < 1:
            raise DpOptimError("batch_size must be >= 1")


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "OptimizerState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), t=0)


def poisson_sample(n: int, q: float, seed: int, step: int) -> np.ndarray:
    """Indices included independently with probability q; fixed by (seed, step)."""
    if not 0.0 <= q <= 1.0:
        raise DpOptimError(f"sampling rate q={q} outside [0, 1]")
    if q == 1.0:
        return np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(step,)))
    mask = rng.random(n) < q
    return np.flatnonzero(mask).astype(np.int64)


def clip(g: np.ndarray, C: float) -> np.ndarray:
    """g * min(1, C / ||g||_2); direction preserved, norm at most C."""
    if C <= 0:
        raise DpOptimError("clip norm must be > 0")
    if not np.all(np.isfinite(g)):
        raise DpOptimError("cannot clip a non-finite gradient")
    norm = float(np.linalg.norm(g))
    if norm <= C:
        return g
    return g * (C / norm)


def noised_sum(
    clipped: list[np.ndarray],
    C: float,
    sigma: float,
    B: int,
    rng: np.random.Generator,
    dim: int | None = None,
) -> np.ndarray:
    """(sum of clipped gradients + N(0, (sigma*C)^2 I)) / B.

    Every input must already be clipped to norm <= C; violating vectors are
    rejected because they would break the sensitivity-C adjacency argument.
    ``dim`` is required only for empty batches (noise-only step).
    """
    if B < 1:
        raise DpOptimError("expected batch size B must be >= 1")
    if clipped:
        dim = len(clipped[0])
    elif dim is None:
        raise DpOptimError("dim required for an empty batch")
    total = np.zeros(dim)
    for i, g in enumerate(clipped):
        norm = float(np.linalg.norm(g))
        if norm > C + _CLIP_TOL:
            raise DpOptimError(
                f"gradient {i} has norm {norm:.6g} > clip bound {C:.6g}; clip() it first"
            )
        total += g
    if sigma > 0:
        total = total + rng.normal(0.0, sigma * C, dim)
    return total / B


def dp_adam_step(
    state: OptimizerState,
    theta: np.ndarray,
    noised_grad: np.ndarray,
    cfg: DpOptimConfig,
) -> tuple[OptimizerState, np.ndarray]:
    """Bias-corrected adaptive-moment update on the noised averaged gradient."""
    if theta.shape != noised_grad.shape or state.m.shape != theta.shape:
        raise DpOptimError("dimension mismatch in optimizer step")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * noised_grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * noised_grad**2
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    new_theta = theta - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if not np.all(np.isfinite(new_theta)):
        raise DpOptimError("non-finite parameter update")
    return OptimizerState(m=m, v=v, t=t), new_theta
