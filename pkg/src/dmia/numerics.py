"""Deterministic vector arithmetic and seeded, stream-split randomness.

Vectors are plain 1-D float64 numpy arrays throughout the package;
:func:`as_vector` is the validating entry point used by public operations.
All internal arithmetic is 64-bit even when datasets are stored at lower
precision.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError

_U64 = (1 << 64) - 1

NORM_KINDS = ("l1", "l2", "l2-squared")


class SeededRng:
    """Counter-based random stream addressed by (master_seed, stream_id).

    The same (master_seed, stream_id) always replays the same draw sequence,
    and distinct stream ids are statistically independent Philox streams.
    Streams are never shared between parallel workers; derive one stream per
    logical purpose (and per sample where needed) via :meth:`stream`.
    """

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed) & _U64
        self.stream_id = int(stream_id) & _U64
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self._generator = np.random.Generator(np.random.Philox(key=key))

    @property
    def generator(self) -> np.random.Generator:
        """The underlying numpy generator (stateful; draws advance it)."""
        return self._generator

    def stream(self, purpose: int, index: int = 0) -> "SeededRng":
        """Derive an independent stream of this master seed.

        ``purpose`` occupies the high 32 bits of the stream id and ``index``
        the low 32 bits, so per-sample substreams never collide across
        purposes. Derivation depends only on the master seed, never on how
        far this stream has been consumed.
        """
        if not 0 <= int(purpose) < (1 << 32):
            raise InvalidArgumentError(f"purpose must fit in 32 bits, got {purpose}")
        if not 0 <= int(index) < (1 << 32):
            raise InvalidArgumentError(f"index must fit in 32 bits, got {index}")
        return SeededRng(self.master_seed, (int(purpose) << 32) | int(index))

    def __repr__(self) -> str:
        return f"SeededRng(master_seed={self.master_seed}, stream_id={self.stream_id})"


def gaussian_vector(rng: SeededRng, dim: int) -> np.ndarray:
    """Draw ``dim`` i.i.d. standard-normal values, advancing the stream."""
    if int(dim) < 1:
        raise InvalidArgumentError(f"dim must be >= 1, got {dim}")
    return rng.generator.standard_normal(int(dim))


def as_vector(data) -> np.ndarray:
    """Validate and return ``data`` as a finite 1-D float64 array."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("vector entries must be finite")
    return arr


def norm(v, kind: str = "l2") -> float:
    """Vector norm of the given kind: one of ``l1``, ``l2``, ``l2-squared``."""
    arr = as_vector(v)
    if kind == "l1":
        return float(np.abs(arr).sum())
    if kind == "l2":
        return float(np.sqrt(arr @ arr))
    if kind == "l2-squared":
        return float(arr @ arr)
    raise InvalidArgumentError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def determinant(m) -> float:
    """Determinant of a square matrix via LU with partial pivoting."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InvalidArgumentError(f"expected a square n>=1 matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("matrix entries must be finite")
    return float(np.linalg.det(arr))
