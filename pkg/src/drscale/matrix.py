"""Point matrices, condensed pairwise distances and pair affinities.

Distances are stored condensed: a 1-D array holding the upper triangle of
the distance matrix in row-major order, i.e. pairs ``(0,1), (0,2), ...,
(0,n-1), (1,2), ...``. This is the same layout as
:func:`scipy.spatial.distance.pdist`.  Every sum over pairs in this package
runs over unordered pairs ``i < j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import (
    DegenerateInputError,
    InputValidationError,
    ParameterError,
)

__all__ = [
    "PairAffinities",
    "as_condensed",
    "as_data_matrix",
    "condensed_index",
    "condensed_pair",
    "max_normalize",
    "n_pairs",
    "n_points_from_length",
    "neighbor_index",
    "pairwise_euclidean",
    "scale_distances",
]


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def n_points_from_length(length: int) -> int:
    """Recover ``n`` from a condensed length ``n(n-1)/2``.

    Raises
    ------
    InputValidationError
        If ``length`` is not a triangular number of the form ``n(n-1)/2``
        with ``n >= 2``.
    """
    n = int(round((1 + math.sqrt(1 + 8 * length)) / 2))
    if n < 2 or n_pairs(n) != length:
        raise InputValidationError(
            f"length {length} is not n(n-1)/2 for any n >= 2"
        )
    return n


def as_data_matrix(points) -> np.ndarray:
    """Validate and return ``points`` as a float64 ``(N, m)`` array."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InputValidationError(f"expected a 2-D matrix, got {x.ndim}-D")
    if x.shape[0] < 2:
        raise InputValidationError(f"need at least 2 rows, got {x.shape[0]}")
    if x.shape[1] < 1:
        raise InputValidationError("need at least 1 column")
    if not np.all(np.isfinite(x)):
        raise InputValidationError("matrix contains NaN or infinite values")
    return x


def as_condensed(d) -> np.ndarray:
    """Validate a condensed distance vector (finite, non-negative, triangular length)."""
    v = np.asarray(d, dtype=np.float64)
    if v.ndim != 1:
        raise InputValidationError(f"condensed distances must be 1-D, got {v.ndim}-D")
    n_points_from_length(v.size)
    if not np.all(np.isfinite(v)):
        raise InputValidationError("distances contain NaN or infinite values")
    if np.any(v < 0):
        raise InputValidationError("distances must be non-negative")
    return v


def pairwise_euclidean(points) -> np.ndarray:
    """Condensed Euclidean distances between the rows of ``points``.

    >>> pairwise_euclidean([[0, 0], [1, 0], [0, 1]]).round(6).tolist()
    [1.0, 1.0, 1.414214]
    """
    return pdist(as_data_matrix(points), metric="euclidean")


def condensed_index(i: int, j: int, n: int) -> int:
    """Position of pair ``(i, j)``, ``i < j``, in a condensed vector over ``n`` points."""
    if not (0 <= i < j < n):
        raise IndexError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return n * i - i * (i + 1) // 2 + (j - i - 1)


def condensed_pair(k: int, n: int) -> tuple[int, int]:
    """Inverse of :func:`condensed_index`."""
    total = n_pairs(n)
    if not (0 <= k < total):
        raise IndexError(f"pair index {k} out of range for n={n}")
    # Row i starts at n*i - i*(i+1)/2; solve the quadratic then fix rounding.
    i = int(n - 2 - math.floor(math.sqrt(-8 * k + 4 * n * (n - 1) - 7) / 2.0 - 0.5))
    while i > 0 and condensed_index(i, i + 1, n) > k:
        i -= 1
    while i + 1 < n - 1 and condensed_index(i + 1, i + 2, n) <= k:
        i += 1
    j = k - (n * i - i * (i + 1) // 2) + i + 1
    return i, j


def neighbor_index(n: int) -> np.ndarray:
    """``(n, n-1)`` array whose row ``i`` holds the condensed indices of pairs
    ``(i, j)`` for every ``j != i`` in increasing ``j``."""
    i = np.arange(n)[:, None]
    j = np.arange(n - 1)[None, :]
    j = j + (j >= i)  # skip the diagonal
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    return n * lo - lo * (lo + 1) // 2 + (hi - lo - 1)


def max_normalize(d) -> np.ndarray:
    """Divide every distance by the largest one.

    Raises
    ------
    DegenerateInputError
        If all distances are zero.
    """
    v = as_condensed(d)
    top = v.max()
    if top <= 0:
        raise DegenerateInputError("cannot max-normalize all-zero distances")
    return v / top


def scale_distances(d, alpha: float) -> np.ndarray:
    if alpha < 0 or not np.isfinite(alpha):
        raise ParameterError(f"scale must be a finite value >= 0, got {alpha}")
    return as_condensed(d) * alpha


@dataclass(frozen=True)
class PairAffinities:
    """Symmetric joint probabilities over ordered pairs ``i != j``, stored condensed.

    ``values[k]`` is ``p_ij = p_ji`` for the k-th unordered pair; the total
    over ordered pairs, ``2 * values.sum()``, is one.
    """

    n_points: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size != n_pairs(self.n_points):
            raise InputValidationError(
                f"expected {n_pairs(self.n_points)} affinities for n={self.n_points}"
            )
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputValidationError("affinities must be finite and non-negative")
        total = 2.0 * v.sum()
        if abs(total - 1.0) > 1e-9:
            raise InputValidationError(
                f"affinities must sum to 1 over ordered pairs, got {total!r}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def ordered_total(self) -> float:
        return float(2.0 * self.values.sum())

    @classmethod
    def from_matrix(cls, matrix) -> "PairAffinities":
        """Build from a full symmetric ``(N, N)`` matrix with zero diagonal."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputValidationError("affinity matrix must be square")
        if not np.allclose(m, m.T, rtol=0, atol=1e-15):
            raise InputValidationError("affinity matrix must be symmetric")
        if np.any(np.diag(m) != 0):
            raise InputValidationError("affinity matrix diagonal must be zero")
        iu = np.triu_indices(m.shape[0], k=1)
        return cls(m.shape[0], m[iu])

    def to_matrix(self) -> np.ndarray:
        m = np.zeros((self.n_points, self.n_points))
        iu = np.triu_indices(self.n_points, k=1)
        m[iu] = self.values
        return m + m.T
