"""Shared state containers and the sparse-mask algebra.

Gradient, parameter, and age vectors are plain 1-D numpy arrays (float64 for
reals, int64 for ages).  A mask is a sorted list of k distinct coordinate
indices.  Its two selector-matrix views -- the d x d binary diagonal selector
and the k x d compact selector -- are definitional: ``apply_mask`` is
multiplication by the compact selector and ``scatter`` by its transpose.
Neither matrix is materialized in the hot path; ``as_compact``/``as_diagonal``
exist so tests can verify the matrix identities on small dimensions.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


class SparseMask:
    """Index set of k distinct coordinates of a length-d vector.

    Indices are stored sorted ascending, which fixes the layout of every
    compressed vector derived from the mask.
    """

    __slots__ = ("indices", "d")

    def __init__(self, indices, d: int):
        d = int(d)
        if d <= 0:
            raise ConfigurationError(f"mask dimension must be positive, got {d}")
        idx = np.sort(np.atleast_1d(np.asarray(indices, dtype=np.int64)))
        if idx.size == 0:
            raise ConfigurationError("mask needs at least one index")
        if idx.size > d or np.unique(idx).size != idx.size:
            raise ConfigurationError("mask indices must be distinct with k <= d")
        if idx[0] < 0 or idx[-1] >= d:
            raise ConfigurationError(f"mask indices must lie in [0, {d})")
        idx.flags.writeable = False
        self.indices = idx
        self.d = d

    @property
    def k(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMask):
            return NotImplemented
        return self.d == other.d and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.d, self.indices.tobytes()))

    def __repr__(self) -> str:
        return f"SparseMask(k={self.k}, d={self.d}, indices={self.indices.tolist()})"

    def as_diagonal(self) -> np.ndarray:
        """Diagonal of the d x d binary selector (a 0/1 vector of length d)."""
        diag = np.zeros(self.d)
        diag[self.indices] = 1.0
        return diag

    def as_compact(self) -> np.ndarray:
        """The k x d compact selector with one 1 per row.  Test helper; do
        not use in the hot path."""
        s = np.zeros((self.k, self.d))
        s[np.arange(self.k), self.indices] = 1.0
        return s


def full_mask(d: int) -> SparseMask:
    return SparseMask(np.arange(d), d)


def _check_vector(x, d: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be 1-D, got shape {arr.shape}")
    if d is not None and arr.size != d:
        raise ConfigurationError(f"{name} has length {arr.size}, expected {d}")
    return arr


def apply_mask(mask: SparseMask, g) -> np.ndarray:
    """Compress g to its k masked entries, in ascending index order."""
    g = _check_vector(g, mask.d, "gradient")
    return g[mask.indices]


def scatter(mask: SparseMask, y) -> np.ndarray:
    """Expand a k-entry compressed vector back to length d, zero off-mask."""
    y = _check_vector(y, mask.k, "compressed vector")
    out = np.zeros(mask.d)
    out[mask.indices] = y
    return out


def add(a, b) -> np.ndarray:
    a = _check_vector(a)
    b = _check_vector(b, a.size, "second operand")
    return a + b


def scale(g, c: float) -> np.ndarray:
    return float(c) * _check_vector(g)


def l2_norm_sq(g) -> float:
    g = _check_vector(g)
    return float(np.dot(g, g))


def abs_values(g) -> np.ndarray:
    return np.abs(_check_vector(g))
