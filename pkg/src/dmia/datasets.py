"""Synthetic datasets, member/holdout splits, and their on-disk formats.

Sample values are normalized to [-1, 1] and rounded through 32-bit floats at
generation time, so the binary save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetCorruptError, InvalidArgumentError
from .numerics import SeededRng

DATASET_MAGIC = b"DSET"
DATASET_VERSION = 1

SYNTHETIC_KINDS = ("gaussian-mixture-2d", "patterned-patches-8x8")

_MIXTURE_MEANS = np.array(
    [[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]], dtype=np.float64
)
_MIXTURE_STD = 0.12


@dataclass(frozen=True)
class Dataset:
    """Flattened real-valued samples, one row per sample."""

    samples: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InvalidArgumentError(f"samples must be (count, dim), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("sample values must be finite")
        if samples.min() < -1.0 or samples.max() > 1.0:
            raise InvalidArgumentError("sample values must lie within [-1, 1]")

    @property
    def dim(self) -> int:
        return int(self.samples.shape[1])

    def __len__(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class SplitManifest:
    """Disjoint member/non-member index sets with their provenance."""

    member_indices: tuple
    nonmember_indices: tuple
    seed: int
    fraction: float

    def __post_init__(self):
        members = tuple(int(i) for i in self.member_indices)
        nonmembers = tuple(int(i) for i in self.nonmember_indices)
        object.__setattr__(self, "member_indices", members)
        object.__setattr__(self, "nonmember_indices", nonmembers)
        if not 0.0 < self.fraction < 1.0:
            raise InvalidArgumentError(f"fraction must be in (0, 1), got {self.fraction}")
        if list(members) != sorted(members) or list(nonmembers) != sorted(nonmembers):
            raise InvalidArgumentError("index lists must be sorted")
        if set(members) & set(nonmembers):
            raise InvalidArgumentError("member and non-member indices must be disjoint")
        if len(set(members)) != len(members) or len(set(nonmembers)) != len(nonmembers):
            raise InvalidArgumentError("index lists must not contain duplicates")


def _round_f32(samples: np.ndarray) -> np.ndarray:
    return samples.astype(np.float32).astype(np.float64)


def _gaussian_mixture_2d(count: int, gen: np.random.Generator) -> np.ndarray:
    comp = gen.integers(0, len(_MIXTURE_MEANS), size=count)
    samples = _MIXTURE_MEANS[comp] + _MIXTURE_STD * gen.standard_normal((count, 2))
    return np.clip(samples, -1.0, 1.0)


def _patterned_patches(count: int, gen: np.random.Generator) -> np.ndarray:
    rows, cols = np.meshgrid(np.arange(8.0), np.arange(8.0), indexing="ij")
    rows /= 7.0
    cols /= 7.0
    samples = np.empty((count, 64), dtype=np.float64)
    for i in range(count):
        family = int(gen.integers(0, 4))
        amp = float(gen.uniform(0.6, 1.0))
        phase = float(gen.uniform(0.0, 2.0 * math.pi))
        freq = float(gen.uniform(0.5, 2.5))
        if family == 0:  # horizontal bars
            patch = np.sin(2.0 * math.pi * freq * rows + phase)
        elif family == 1:  # vertical bars
            patch = np.sin(2.0 * math.pi * freq * cols + phase)
        elif family == 2:  # oriented stripes
            theta = float(gen.uniform(0.0, math.pi))
            proj = math.cos(theta) * rows + math.sin(theta) * cols
            patch = np.sin(2.0 * math.pi * freq * proj + phase)
        else:  # signed blob on opposite background
            r0, c0 = gen.uniform(0.15, 0.85, size=2)
            width = float(gen.uniform(0.12, 0.35))
            sign = 1.0 if gen.integers(0, 2) == 1 else -1.0
            bump = np.exp(-(((rows - r0) ** 2) + ((cols - c0) ** 2)) / (2.0 * width**2))
            patch = sign * (2.0 * bump - 1.0)
        samples[i] = (amp * patch).reshape(-1)
    return np.clip(samples, -1.0, 1.0)


def generate_synthetic(kind: str, count: int, rng: SeededRng, name: str | None = None) -> Dataset:
    """Generate a synthetic dataset of the given kind.

    Args:
        kind: one of ``gaussian-mixture-2d`` (4 fixed components) or
            ``patterned-patches-8x8`` (randomized bar/stripe/blob patterns,
            64-dim).
        count: number of samples, at least 2.
        rng: the stream that makes generation reproducible.
        name: optional dataset identifier, defaults to ``kind``.
    """
    if int(count) < 2:
        raise InvalidArgumentError(f"count must be >= 2, got {count}")
    if kind == "gaussian-mixture-2d":
        samples = _gaussian_mixture_2d(int(count), rng.generator)
    elif kind == "patterned-patches-8x8":
        samples = _patterned_patches(int(count), rng.generator)
    else:
        raise InvalidArgumentError(f"unknown kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    return Dataset(samples=_round_f32(samples), name=name or kind)


def split(dataset: Dataset, fraction: float, rng: SeededRng) -> SplitManifest:
    """Uniformly random disjoint member/non-member split of the dataset."""
    if not 0.0 < fraction < 1.0:
        raise InvalidArgumentError(f"fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    n_members = int(round(fraction * n))
    if n_members == 0 or n_members == n:
        raise InvalidArgumentError(
            f"fraction {fraction} leaves an empty side for {n} samples"
        )
    perm = rng.generator.permutation(n)
    members = tuple(sorted(int(i) for i in perm[:n_members]))
    nonmembers = tuple(sorted(int(i) for i in perm[n_members:]))
    return SplitManifest(
        member_indices=members,
        nonmember_indices=nonmembers,
        seed=rng.master_seed,
        fraction=float(fraction),
    )


def save_dataset(dataset: Dataset, path) -> None:
    """Write the binary dataset file (f32 payload, CRC32 trailer)."""
    payload = dataset.samples.astype("<f4").tobytes()
    header = (
        DATASET_MAGIC
        + struct.pack("<H", DATASET_VERSION)
        + struct.pack("<II", dataset.dim, len(dataset))
    )
    body = header + payload
    crc = zlib.crc32(body) & 0xFFFFFFFF
    Path(path).write_bytes(body + struct.pack("<I", crc))


def load_dataset(path) -> Dataset:
    """Read a binary dataset file, validating structure and checksum."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 14:
        raise DatasetCorruptError(f"file too short for header ({len(raw)} bytes)")
    if raw[:4] != DATASET_MAGIC:
        raise DatasetCorruptError(f"bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != DATASET_VERSION:
        raise DatasetCorruptError(f"unsupported dataset version {version}")
    dim, count = struct.unpack_from("<II", raw, 6)
    if dim == 0 or count == 0:
        raise DatasetCorruptError(f"degenerate header dim={dim} count={count}")
    expected = 14 + 4 * dim * count + 4
    if len(raw) != expected:
        raise DatasetCorruptError(
            f"file length {len(raw)} does not match header promise {expected}"
        )
    (stored_crc,) = struct.unpack_from("<I", raw, expected - 4)
    if stored_crc != (zlib.crc32(raw[: expected - 4]) & 0xFFFFFFFF):
        raise DatasetCorruptError("checksum mismatch")
    flat = np.frombuffer(raw, dtype="<f4", count=dim * count, offset=14)
    samples = flat.astype(np.float64).reshape(count, dim)
    try:
        return Dataset(samples=samples, name=path.stem)
    except InvalidArgumentError as exc:
        raise DatasetCorruptError(f"payload failed validation: {exc}") from exc


def save_manifest(manifest: SplitManifest, path, config_hash: str = "") -> None:
    doc = {
        "member_indices": list(manifest.member_indices),
        "nonmember_indices": list(manifest.nonmember_indices),
        "seed": manifest.seed,
        "fraction": manifest.fraction,
    }
    if config_hash:
        doc["config_hash"] = config_hash
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_manifest(path) -> SplitManifest:
    doc = json.loads(Path(path).read_text())
    try:
        return SplitManifest(
            member_indices=tuple(doc["member_indices"]),
            nonmember_indices=tuple(doc["nonmember_indices"]),
            seed=int(doc["seed"]),
            fraction=float(doc["fraction"]),
        )
    except KeyError as exc:
        raise DatasetCorruptError(f"manifest missing key {exc}") from exc
