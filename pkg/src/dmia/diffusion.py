"""Noise schedules and the closed-form forward / deterministic reverse steps.

Timesteps are 1-based; t = 0 is the virtual clean-data timestep with
alpha_bar = 1, which gives the deterministic reverse step a well-defined
terminal and lets forward mappings start from clean data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericDegenerateError
from .numerics import as_vector

DEFAULT_TOTAL_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02

# alpha_bar below this is treated as numerically degenerate in estimate_x0.
ALPHA_BAR_FLOOR = 1e-8


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and their running products.

    Attributes:
        betas: per-step variance, each in (0, 1), nondecreasing.
        alphas: 1 - betas.
        alpha_bars: running product of alphas, strictly decreasing in (0, 1).
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        alphas = np.asarray(self.alphas, dtype=np.float64)
        alpha_bars = np.asarray(self.alpha_bars, dtype=np.float64)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        if betas.ndim != 1 or betas.size < 2:
            raise InvalidArgumentError("schedule needs at least 2 steps")
        if betas.shape != alphas.shape or betas.shape != alpha_bars.shape:
            raise InvalidArgumentError("betas/alphas/alpha_bars length mismatch")
        if not (np.all(betas > 0.0) and np.all(betas < 1.0)):
            raise InvalidArgumentError("betas must lie strictly in (0, 1)")
        if np.any(np.diff(betas) < 0.0):
            raise InvalidArgumentError("betas must be nondecreasing")
        if not (np.all(alpha_bars > 0.0) and np.all(alpha_bars < 1.0)):
            raise InvalidArgumentError("alpha_bars must lie strictly in (0, 1)")
        if np.any(np.diff(alpha_bars) >= 0.0):
            raise InvalidArgumentError("alpha_bars must be strictly decreasing")
        expected = np.cumprod(alphas)
        if np.any(np.abs(alpha_bars - expected) > 1e-12 * np.abs(expected)):
            raise InvalidArgumentError("alpha_bars inconsistent with running product of alphas")

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        alphas = 1.0 - betas
        return cls(betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))

    @property
    def total_steps(self) -> int:
        return int(self.betas.size)

    def alpha_bar(self, t: int) -> float:
        """alpha_bar at timestep t, with the virtual alpha_bar(0) = 1."""
        t = _check_timestep(self, t, lo=0)
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


def _check_timestep(schedule: NoiseSchedule, t, lo: int) -> int:
    if not float(t).is_integer():
        raise InvalidArgumentError(f"timestep must be an integer, got {t!r}")
    t = int(t)
    if not lo <= t <= schedule.total_steps:
        raise InvalidArgumentError(
            f"timestep {t} out of range [{lo}, {schedule.total_steps}]"
        )
    return t


def _check_dims(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise InvalidArgumentError(f"{what}: dimension mismatch {a.shape} vs {b.shape}")


def build_linear_schedule(
    total_steps: int = DEFAULT_TOTAL_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear variance schedule inclusive of both endpoints."""
    if int(total_steps) < 2:
        raise InvalidArgumentError(f"total_steps must be >= 2, got {total_steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidArgumentError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(float(beta_start), float(beta_end), int(total_steps))
    return NoiseSchedule.from_betas(betas)


def forward_noise(schedule: NoiseSchedule, x0, t: int, eps) -> np.ndarray:
    """Map clean data directly to timestep t given the noise draw.

    Returns sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
    """
    t = _check_timestep(schedule, t, lo=1)
    x0 = as_vector(x0)
    eps = as_vector(eps)
    _check_dims(x0, eps, "forward_noise")
    ab = schedule.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def estimate_x0(
    schedule: NoiseSchedule,
    xt,
    t: int,
    eps_hat,
    alpha_bar_floor: float = ALPHA_BAR_FLOOR,
) -> np.ndarray:
    """Invert the forward map: (xt - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t).

    t = 0 returns xt unchanged (alpha_bar = 1). Raises NumericDegenerateError
    when alpha_bar_t falls below ``alpha_bar_floor``.
    """
    t = _check_timestep(schedule, t, lo=0)
    xt = as_vector(xt)
    eps_hat = as_vector(eps_hat)
    _check_dims(xt, eps_hat, "estimate_x0")
    ab = schedule.alpha_bar(t)
    if ab < alpha_bar_floor:
        raise NumericDegenerateError(
            f"alpha_bar({t}) = {ab:.3e} below floor {alpha_bar_floor:.0e}"
        )
    return (xt - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def ddim_reverse_step(schedule: NoiseSchedule, x0_hat, eps_hat, target_t: int) -> np.ndarray:
    """Deterministic (zero-variance) denoising step onto ``target_t``.

    target_t = 0 returns x0_hat itself.
    """
    target_t = _check_timestep(schedule, target_t, lo=0)
    x0_hat = as_vector(x0_hat)
    eps_hat = as_vector(eps_hat)
    _check_dims(x0_hat, eps_hat, "ddim_reverse_step")
    ab = schedule.alpha_bar(target_t)
    return np.sqrt(ab) * x0_hat + np.sqrt(1.0 - ab) * eps_hat


def ddim_forward_step(schedule: NoiseSchedule, xt, t: int, eps_hat, target_t: int) -> np.ndarray:
    """Deterministic inversion step from timestep t to a later target_t."""
    t = _check_timestep(schedule, t, lo=0)
    target_t = _check_timestep(schedule, target_t, lo=0)
    if target_t <= t:
        raise InvalidArgumentError(f"target_t must exceed t, got t={t}, target_t={target_t}")
    x0_hat = estimate_x0(schedule, xt, t, eps_hat)
    return ddim_reverse_step(schedule, x0_hat, eps_hat, target_t)
