"""The noise-aggregation membership attack.

Pipeline per sample: inject small noise once, walk the deterministic
denoising trajectory collecting the predicted-noise sequence, measure how
tightly the sequence clusters, and map that to a membership score where
higher means more member-like. The length-k collection issues exactly k
model queries and nothing else touches the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import NoiseSchedule, ddim_reverse_step, estimate_x0, forward_noise
from .errors import InvalidArgumentError
from .evaluation import ScoredRecord
from .numerics import SeededRng, as_vector, gaussian_vector

AGGREGATION_METRICS = ("l1", "l2", "centroid", "density", "volume")
INJECTION_MODES = ("schedule", "direct")

DEFAULT_ATTACK_T = 80
DEFAULT_K = 5
DEFAULT_STRIDE = 10
DEFAULT_SIGMA = 0.1
DEFAULT_DELTA = 1e-10


@dataclass(frozen=True)
class AttackConfig:
    """Attack parameters.

    attack_t is the injection timestep, k the number of collected noise
    predictions, stride_m the timestep stride between them, sigma the noise
    std for direct injection, and delta the numerical stability constant of
    the score transform.
    """

    attack_t: int = DEFAULT_ATTACK_T
    k: int = DEFAULT_K
    stride_m: int = DEFAULT_STRIDE
    sigma: float = DEFAULT_SIGMA
    injection_mode: str = "schedule"
    metric: str = "l2"
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.k < 2:
            raise InvalidArgumentError(f"attack.k must be >= 2, got {self.k}")
        if self.stride_m < 1:
            raise InvalidArgumentError(f"attack.stride_m must be >= 1, got {self.stride_m}")
        if self.attack_t - (self.k - 1) * self.stride_m < 0:
            raise InvalidArgumentError(
                f"attack.attack_t: trajectory underflows, attack_t={self.attack_t} "
                f"< (k-1)*stride_m={(self.k - 1) * self.stride_m}"
            )
        if self.sigma <= 0.0:
            raise InvalidArgumentError(f"attack.sigma must be > 0, got {self.sigma}")
        if self.delta <= 0.0:
            raise InvalidArgumentError(f"attack.delta must be > 0, got {self.delta}")
        if self.injection_mode not in INJECTION_MODES:
            raise InvalidArgumentError(
                f"attack.injection_mode must be one of {INJECTION_MODES}, "
                f"got {self.injection_mode!r}"
            )
        if self.metric not in AGGREGATION_METRICS:
            raise InvalidArgumentError(
                f"attack.metric must be one of {AGGREGATION_METRICS}, got {self.metric!r}"
            )

    def timesteps(self) -> tuple:
        return tuple(self.attack_t - i * self.stride_m for i in range(self.k))


@dataclass(frozen=True)
class NoiseSequence:
    """The k noise predictions collected along one denoising trajectory."""

    eps_hats: np.ndarray
    timesteps: tuple

    def __post_init__(self):
        eps = np.asarray(self.eps_hats, dtype=np.float64)
        object.__setattr__(self, "eps_hats", eps)
        object.__setattr__(self, "timesteps", tuple(int(t) for t in self.timesteps))
        if eps.ndim != 2 or eps.shape[0] < 2:
            raise InvalidArgumentError(f"need a (k>=2, dim) array, got shape {eps.shape}")
        if len(self.timesteps) != eps.shape[0]:
            raise InvalidArgumentError("timesteps length does not match sequence length")
        gaps = {a - b for a, b in zip(self.timesteps, self.timesteps[1:])}
        if len(gaps) != 1 or min(gaps) < 1:
            raise InvalidArgumentError(
                f"timesteps must strictly decrease by a constant stride, got {self.timesteps}"
            )

    @property
    def k(self) -> int:
        return int(self.eps_hats.shape[0])


def inject_noise(schedule: NoiseSchedule, x0, config: AttackConfig, rng: SeededRng):
    """Single noise draw placing x0 at the attack timestep.

    Mode ``schedule`` applies the closed-form forward map at attack_t; mode
    ``direct`` adds sigma-scaled noise and treats the result as residing at
    attack_t. Returns (noisy sample, the drawn noise); zero model queries.

    Args:
        schedule: the noise schedule.
        x0: clean sample.
        config: attack parameters.
        rng: per-sample stream; exactly one gaussian draw is consumed.
    """
    x0 = as_vector(x0)
    eps = gaussian_vector(rng, x0.size)
    if config.injection_mode == "schedule":
        return forward_noise(schedule, x0, config.attack_t, eps), eps
    return x0 + config.sigma * eps, eps


def collect_noise_sequence(schedule: NoiseSchedule, model, x_noisy, config: AttackConfig) -> NoiseSequence:
    """Walk the deterministic denoising trajectory, recording predictions.

    Starting from the injected sample at attack_t, predicts the noise, maps
    the implied clean sample down one stride, and repeats; the k predictions
    at attack_t, attack_t - m, ..., attack_t - (k-1)m form the sequence.
    Issues exactly k model queries.
    """
    if config.attack_t > schedule.total_steps:
        raise InvalidArgumentError(
            f"attack.attack_t {config.attack_t} exceeds schedule length {schedule.total_steps}"
        )
    x = as_vector(x_noisy)
    eps_hats = []
    steps = config.timesteps()
    for i, t in enumerate(steps):
        eps_hat = model.predict_eps(x, t)
        eps_hats.append(np.asarray(eps_hat, dtype=np.float64))
        if i < config.k - 1:
            x0_hat = estimate_x0(schedule, x, t, eps_hat)
            x = ddim_reverse_step(schedule, x0_hat, eps_hat, steps[i + 1])
    return NoiseSequence(eps_hats=np.stack(eps_hats), timesteps=steps)


def _sequence_array(seq) -> np.ndarray:
    eps = seq.eps_hats if isinstance(seq, NoiseSequence) else np.asarray(seq, dtype=np.float64)
    if eps.ndim != 2 or eps.shape[0] < 2:
        raise InvalidArgumentError(f"need a (k>=2, dim) sequence, got shape {eps.shape}")
    return eps


def aggregation_l1(seq) -> float:
    """Mean pairwise L1 distance over all ordered pairs (diagonal included)."""
    eps = _sequence_array(seq)
    diffs = eps[:, None, :] - eps[None, :, :]
    k = eps.shape[0]
    return float(np.abs(diffs).sum() / (k * k))


def aggregation_mse(seq) -> float:
    """Mean pairwise squared L2 distance over all ordered pairs."""
    eps = _sequence_array(seq)
    diffs = eps[:, None, :] - eps[None, :, :]
    k = eps.shape[0]
    return float((diffs**2).sum() / (k * k))


def aggregation_centroid(seq) -> float:
    """Mean L2 distance to the sequence centroid."""
    eps = _sequence_array(seq)
    centered = eps - eps.mean(axis=0)
    return float(np.sqrt((centered**2).sum(axis=1)).mean())


def aggregation_density(seq, delta: float = DEFAULT_DELTA) -> float:
    """Mean reciprocal nearest-neighbor distance (large when clustered).

    Note the inverted orientation relative to the dispersion metrics: this
    grows as the sequence aggregates, so the score path takes its reciprocal
    before the log transform.
    """
    if delta <= 0.0:
        raise InvalidArgumentError(f"delta must be > 0, got {delta}")
    eps = _sequence_array(seq)
    diffs = eps[:, None, :] - eps[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=2))
    np.fill_diagonal(dists, np.inf)
    nearest = dists.min(axis=1)
    return float((1.0 / (nearest + delta)).mean())


def aggregation_volume(seq) -> float:
    """Intrinsic (k-1)-simplex volume of the sequence points.

    Computed as sqrt(det(G)) / (k-1)! with G the Gram matrix of the edge
    vectors from the first point; affinely dependent points give 0.
    """
    eps = _sequence_array(seq)
    k = eps.shape[0]
    edges = eps[1:] - eps[0]
    gram = edges @ edges.T
    scale = float(np.max(np.diag(gram)))
    if scale <= 0.0:
        return 0.0
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return 0.0
    # Cholesky can leak a tiny positive pivot on exactly singular input;
    # pivots below the rounding floor mean affinely dependent points.
    pivots = np.diag(chol) ** 2
    if np.any(pivots <= (k - 1) * np.finfo(np.float64).eps * scale):
        return 0.0
    return float(np.prod(np.diag(chol)) / math.factorial(k - 1))


_METRIC_FUNCS = {
    "l1": aggregation_l1,
    "l2": aggregation_mse,
    "centroid": aggregation_centroid,
    "volume": aggregation_volume,
}


def aggregate(seq, metric: str, delta: float = DEFAULT_DELTA) -> float:
    """Dispatch to the named aggregation metric."""
    if metric == "density":
        return aggregation_density(seq, delta)
    try:
        return _METRIC_FUNCS[metric](seq)
    except KeyError:
        raise InvalidArgumentError(
            f"unknown metric {metric!r}; expected one of {AGGREGATION_METRICS}"
        ) from None


def membership_score(c_value: float, delta: float = DEFAULT_DELTA) -> float:
    """-log(c + delta); strictly decreasing in the aggregation value."""
    if c_value < 0.0:
        raise InvalidArgumentError(f"aggregation value must be >= 0, got {c_value}")
    if delta <= 0.0:
        raise InvalidArgumentError(f"delta must be > 0, got {delta}")
    return float(-math.log(c_value + delta))


def attack_sample(
    schedule: NoiseSchedule,
    model,
    x0,
    config: AttackConfig,
    rng: SeededRng,
    *,
    sample_id: int = 0,
    is_member: bool = False,
    attack_tag: str = "aggregation",
    config_hash: str = "",
) -> ScoredRecord:
    """Score one sample end to end; exactly k model queries.

    The density metric is re-oriented (reciprocal) before the log transform
    so that higher scores mean more member-like for every metric.
    """
    queries_before = model.query_count
    x_noisy, _ = inject_noise(schedule, x0, config, rng)
    seq = collect_noise_sequence(schedule, model, x_noisy, config)
    queries = model.query_count - queries_before
    c_value = aggregate(seq, config.metric, config.delta)
    oriented = 1.0 / c_value if config.metric == "density" else c_value
    return ScoredRecord(
        sample_id=sample_id,
        is_member=is_member,
        score=membership_score(oriented, config.delta),
        queries=queries,
        attack_tag=attack_tag,
        metric=config.metric,
        config_hash=config_hash,
        aggregation=c_value,
    )
