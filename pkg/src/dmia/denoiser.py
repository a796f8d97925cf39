"""Trainable noise-prediction network with hand-rolled backpropagation.

A small dense network predicts the injected noise from a noisy sample and a
sinusoidal timestep embedding concatenated to its input. Training minimizes
the mean squared error between drawn and predicted noise. The network, the
gradients, and the optimizer are implemented directly on numpy so that the
finite-difference gradient check exercises the real code path.
"""

from __future__ import annotations

import math
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import NoiseSchedule, forward_noise
from .errors import CheckpointCorruptError, InvalidArgumentError, TrainingDivergedError
from .numerics import SeededRng, as_vector, gaussian_vector

CHECKPOINT_MAGIC = b"DMIA"
CHECKPOINT_VERSION = 1

DEFAULT_HIDDEN_DIMS = (128, 128)
DEFAULT_TIME_EMBED_DIM = 16

OPTIMIZERS = ("sgd", "momentum-sgd")

# Stream purposes local to training, derived from TrainConfig.seed.
_STREAM_SHUFFLE = 101
_STREAM_NOISE = 102


def _silu(z: np.ndarray) -> np.ndarray:
    return z / (1.0 + np.exp(-z))


def _silu_grad(z: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


def time_embedding(t: int, dim: int = DEFAULT_TIME_EMBED_DIM) -> np.ndarray:
    """Sinusoidal encoding of an integer timestep."""
    return _time_embedding_batch(np.asarray([t], dtype=np.float64), dim)[0]


def _time_embedding_batch(ts: np.ndarray, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = np.asarray(ts, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


@dataclass
class TrainConfig:
    """Hyperparameters for the deliberate-overfit training regime.

    learning_rate = 0 is allowed and performs no updates, which is useful as
    a no-op sanity control.
    """

    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 2e-3
    seed: int = 0
    optimizer: str = "momentum-sgd"
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0.0:
            raise InvalidArgumentError(
                f"train.learning_rate must be >= 0, got {self.learning_rate}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise InvalidArgumentError(
                f"train.optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}"
            )


class EpsilonPredictor:
    """Dense network mapping (noisy sample, timestep) to predicted noise.

    The output dimension equals the input dimension. ``query_count`` counts
    predict_eps calls under a lock so concurrent read-only inference from
    parallel attack workers stays consistent.
    """

    def __init__(self, input_dim, hidden_dims, weights, biases,
                 time_embed_dim: int = DEFAULT_TIME_EMBED_DIM):
        self.input_dim = int(input_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.time_embed_dim = int(time_embed_dim)
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self._query_lock = threading.Lock()
        self._query_count = 0
        self._validate_shapes()

    def _validate_shapes(self):
        if self.input_dim < 1:
            raise InvalidArgumentError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise InvalidArgumentError(
                f"time_embed_dim must be even and >= 2, got {self.time_embed_dim}"
            )
        dims = [self.input_dim + self.time_embed_dim, *self.hidden_dims, self.input_dim]
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise InvalidArgumentError("layer count does not match architecture")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise InvalidArgumentError(
                    f"layer {i} has shape {w.shape}/{b.shape}, expected "
                    f"({dims[i + 1]}, {dims[i]})/({dims[i + 1]},)"
                )

    @property
    def query_count(self) -> int:
        return self._query_count

    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def predict_eps(self, xt, t: int) -> np.ndarray:
        """Predicted noise for one sample at a timestep; counts one query."""
        xt = as_vector(xt)
        if xt.size != self.input_dim:
            raise InvalidArgumentError(
                f"input has dim {xt.size}, model expects {self.input_dim}"
            )
        if not float(t).is_integer() or int(t) < 1:
            raise InvalidArgumentError(f"timestep must be an integer >= 1, got {t!r}")
        with self._query_lock:
            self._query_count += 1
        return _forward(self, xt[None, :], np.asarray([int(t)], dtype=np.float64))[0]


def _forward(model: EpsilonPredictor, x: np.ndarray, ts: np.ndarray) -> np.ndarray:
    a = np.concatenate([x, _time_embedding_batch(ts, model.time_embed_dim)], axis=1)
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = _silu(a @ w.T + b)
    return a @ model.weights[-1].T + model.biases[-1]


def _forward_cached(model: EpsilonPredictor, x: np.ndarray, ts: np.ndarray):
    a = np.concatenate([x, _time_embedding_batch(ts, model.time_embed_dim)], axis=1)
    acts = [a]
    pre = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w.T + b
        pre.append(z)
        a = _silu(z)
        acts.append(a)
    y = a @ model.weights[-1].T + model.biases[-1]
    return y, (acts, pre)


def _backward(model: EpsilonPredictor, cache, d_out: np.ndarray):
    """Gradients of the cached forward pass w.r.t. every weight and bias."""
    acts, pre = cache
    n_layers = len(model.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    grads_w[-1] = d_out.T @ acts[-1]
    grads_b[-1] = d_out.sum(axis=0)
    da = d_out @ model.weights[-1]
    for i in range(n_layers - 2, -1, -1):
        dz = da * _silu_grad(pre[i])
        grads_w[i] = dz.T @ acts[i]
        grads_b[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ model.weights[i]
    return grads_w, grads_b


def init_predictor(
    input_dim: int,
    hidden_dims,
    rng: SeededRng,
    time_embed_dim: int = DEFAULT_TIME_EMBED_DIM,
) -> EpsilonPredictor:
    """Fresh predictor with uniform weights at scale 1/sqrt(fan_in)."""
    hidden_dims = tuple(int(h) for h in hidden_dims)
    if int(input_dim) < 1:
        raise InvalidArgumentError(f"input_dim must be >= 1, got {input_dim}")
    if len(hidden_dims) == 0:
        raise InvalidArgumentError("hidden_dims must not be empty")
    if any(h < 1 for h in hidden_dims):
        raise InvalidArgumentError(f"hidden_dims must be positive, got {hidden_dims}")
    dims = [int(input_dim) + int(time_embed_dim), *hidden_dims, int(input_dim)]
    gen = rng.generator
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = 1.0 / math.sqrt(fan_in)
        weights.append(gen.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EpsilonPredictor(
        input_dim=int(input_dim),
        hidden_dims=hidden_dims,
        weights=weights,
        biases=biases,
        time_embed_dim=int(time_embed_dim),
    )


def training_loss(model: EpsilonPredictor, schedule: NoiseSchedule, batch, rng: SeededRng) -> float:
    """Mean squared-noise-residual loss over a batch of clean samples.

    Per sample, draws (t, eps), forms the noisy input, and accumulates
    ||eps - predicted||^2. Issues one model query per sample.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.size == 0:
        raise InvalidArgumentError("batch must not be empty")
    total = 0.0
    for x0 in batch:
        t = int(rng.generator.integers(1, schedule.total_steps + 1))
        eps = gaussian_vector(rng, x0.size)
        xt = forward_noise(schedule, x0, t, eps)
        resid = eps - model.predict_eps(xt, t)
        total += float(resid @ resid)
    return total / batch.shape[0]


def _flatten_params(model) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ravel(w))
        parts.append(np.ravel(b))
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def _set_params(model, flat: np.ndarray):
    offset = 0
    for w, b in zip(model.weights, model.biases):
        w[...] = flat[offset : offset + w.size].reshape(w.shape)
        offset += w.size
        b[...] = flat[offset : offset + b.size]
        offset += b.size


def train(
    model: EpsilonPredictor,
    schedule: NoiseSchedule,
    member_data,
    config: TrainConfig,
) -> list:
    """Train the predictor in place on the member set; returns the loss trace.

    Minibatches draw fresh (t, eps) pairs each step. The per-epoch trace
    entry is the loss on a probe set of (t, eps) draws fixed before training
    starts, so the trace is a stable function of the parameters (and exactly
    constant when learning_rate is 0).
    """
    data = np.atleast_2d(np.asarray(member_data, dtype=np.float64))
    n, dim = data.shape
    if n < 1:
        raise InvalidArgumentError("member_data must not be empty")
    if dim != model.input_dim:
        raise InvalidArgumentError(f"data dim {dim} does not match model {model.input_dim}")
    if config.batch_size > n:
        raise InvalidArgumentError(
            f"train.batch_size {config.batch_size} exceeds dataset size {n}"
        )

    shuffle_gen = SeededRng(config.seed, 0).stream(_STREAM_SHUFFLE).generator
    noise_gen = SeededRng(config.seed, 0).stream(_STREAM_NOISE).generator

    sqrt_ab = np.sqrt(schedule.alpha_bars)
    sqrt_1mab = np.sqrt(1.0 - schedule.alpha_bars)
    total_steps = schedule.total_steps

    probe_ts = noise_gen.integers(1, total_steps + 1, size=n)
    probe_eps = noise_gen.standard_normal((n, dim))
    probe_xt = sqrt_ab[probe_ts - 1, None] * data + sqrt_1mab[probe_ts - 1, None] * probe_eps
    probe_tf = probe_ts.astype(np.float64)

    lr = config.learning_rate
    use_momentum = config.optimizer == "momentum-sgd"
    velocity_w = [np.zeros_like(w) for w in model.weights]
    velocity_b = [np.zeros_like(b) for b in model.biases]

    trace = []
    for epoch in range(config.epochs):
        order = shuffle_gen.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x0 = data[idx]
            ts = noise_gen.integers(1, total_steps + 1, size=idx.size)
            eps = noise_gen.standard_normal((idx.size, dim))
            xt = sqrt_ab[ts - 1, None] * x0 + sqrt_1mab[ts - 1, None] * eps
            if lr == 0.0:
                continue
            y, cache = _forward_cached(model, xt, ts.astype(np.float64))
            d_out = (2.0 / idx.size) * (y - eps)
            grads_w, grads_b = _backward(model, cache, d_out)
            if use_momentum:
                for w, b, gw, gb, vw, vb in zip(
                    model.weights, model.biases, grads_w, grads_b, velocity_w, velocity_b
                ):
                    vw *= config.momentum
                    vw += gw
                    vb *= config.momentum
                    vb += gb
                    w -= lr * vw
                    b -= lr * vb
            else:
                for w, b, gw, gb in zip(model.weights, model.biases, grads_w, grads_b):
                    w -= lr * gw
                    b -= lr * gb
        resid = _forward(model, probe_xt, probe_tf) - probe_eps
        epoch_loss = float(np.mean(np.sum(resid * resid, axis=1)))
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch)
        trace.append(epoch_loss)
    return trace


def gradient_check(model: EpsilonPredictor, schedule: NoiseSchedule, x0, rng: SeededRng) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses one fixed (t, eps) draw. Models with no parameters return 0.
    """
    flat = _flatten_params(model)
    if flat.size == 0:
        return 0.0
    if flat.size > 5000:
        raise InvalidArgumentError(
            f"model too large to finite-difference ({flat.size} parameters > 5000)"
        )
    x0 = as_vector(x0)
    t = int(rng.generator.integers(1, schedule.total_steps + 1))
    eps = gaussian_vector(rng, x0.size)
    xt = forward_noise(schedule, x0, t, eps)
    ts = np.asarray([float(t)])

    y, cache = _forward_cached(model, xt[None, :], ts)
    grads_w, grads_b = _backward(model, cache, 2.0 * (y - eps[None, :]))
    analytic = np.concatenate(
        [np.ravel(g) for gw, gb in zip(grads_w, grads_b) for g in (gw, gb)]
    )

    def loss_at(theta: np.ndarray) -> float:
        _set_params(model, theta)
        r = _forward(model, xt[None, :], ts)[0] - eps
        return float(r @ r)

    step = 1e-5
    numeric = np.empty_like(flat)
    work = flat.copy()
    for i in range(flat.size):
        orig = work[i]
        work[i] = orig + step
        plus = loss_at(work)
        work[i] = orig - step
        minus = loss_at(work)
        work[i] = orig
        numeric[i] = (plus - minus) / (2.0 * step)
    _set_params(model, flat)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
    return float(np.max(np.abs(analytic - numeric) / denom))


def save_checkpoint(model: EpsilonPredictor, path) -> None:
    """Write the binary checkpoint: magic, version, dims, f64 params, CRC32."""
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<H", CHECKPOINT_VERSION)
    buf += struct.pack("<III", model.input_dim, model.time_embed_dim, len(model.hidden_dims))
    for h in model.hidden_dims:
        buf += struct.pack("<I", h)
    for w, b in zip(model.weights, model.biases):
        buf += w.astype("<f8").tobytes()
        buf += b.astype("<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path) -> EpsilonPredictor:
    """Read a checkpoint; the loaded model starts with query_count = 0."""
    raw = Path(path).read_bytes()

    def need(offset: int, nbytes: int, what: str) -> int:
        if len(raw) < offset + nbytes:
            raise CheckpointCorruptError(f"truncated while reading {what}", offset=len(raw))
        return offset + nbytes

    pos = need(0, 4, "magic")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointCorruptError(f"bad magic {raw[:4]!r}", offset=0)
    end = need(pos, 2, "version")
    (version,) = struct.unpack_from("<H", raw, pos)
    if version != CHECKPOINT_VERSION:
        raise CheckpointCorruptError(
            f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}",
            offset=pos,
        )
    pos = end
    pos = need(pos, 12, "architecture header")
    input_dim, embed_dim, n_hidden = struct.unpack_from("<III", raw, pos - 12)
    hidden_dims = []
    for i in range(n_hidden):
        pos = need(pos, 4, f"hidden dim {i}")
        hidden_dims.append(struct.unpack_from("<I", raw, pos - 4)[0])

    dims = [input_dim + embed_dim, *hidden_dims, input_dim]
    weights, biases = [], []
    for i in range(len(dims) - 1):
        wn = dims[i + 1] * dims[i]
        pos = need(pos, 8 * wn, f"layer {i} weights")
        weights.append(
            np.frombuffer(raw, dtype="<f8", count=wn, offset=pos - 8 * wn).reshape(
                dims[i + 1], dims[i]
            )
        )
        pos = need(pos, 8 * dims[i + 1], f"layer {i} biases")
        biases.append(
            np.frombuffer(raw, dtype="<f8", count=dims[i + 1], offset=pos - 8 * dims[i + 1])
        )

    end = need(pos, 4, "checksum")
    if end != len(raw):
        raise CheckpointCorruptError(f"{len(raw) - end} trailing bytes", offset=end)
    (stored_crc,) = struct.unpack_from("<I", raw, pos)
    if stored_crc != (zlib.crc32(raw[:pos]) & 0xFFFFFFFF):
        raise CheckpointCorruptError("checksum mismatch", offset=pos)

    try:
        return EpsilonPredictor(
            input_dim=input_dim,
            hidden_dims=hidden_dims,
            weights=weights,
            biases=biases,
            time_embed_dim=embed_dim,
        )
    except InvalidArgumentError as exc:
        raise CheckpointCorruptError(f"architecture failed validation: {exc}", offset=6) from exc
