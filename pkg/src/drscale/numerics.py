"""Small numerical primitives shared by the metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .errors import InputValidationError, ParameterError, UndefinedCorrelationError

__all__ = [
    "BracketSearchResult",
    "golden_section_min",
    "pava_isotonic",
    "pearson_r",
    "rank_average_ties",
    "spearman_rho",
]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _finite_vector(x, name="x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise InputValidationError(f"{name} contains NaN or infinite values")
    return v


def pava_isotonic(y) -> np.ndarray:
    """Least-squares non-decreasing fit by pool-adjacent-violators.

    Parameters
    ----------
    y : array_like
        Values in the order the monotone constraint applies to.

    Returns
    -------
    ndarray
        Non-decreasing vector minimizing ``sum((y - fit)**2)``; each block
        of pooled entries takes the mean of its members.
    """
    v = _finite_vector(y, "y")
    if v.size == 0:
        raise ParameterError("isotonic regression needs at least one value")
    sums: list[float] = []
    counts: list[int] = []
    for value in v.tolist():
        s, c = value, 1
        # pool while the previous block mean exceeds the current one
        while sums and sums[-1] * c > s * counts[-1]:
            s += sums.pop()
            c += counts.pop()
        sums.append(s)
        counts.append(c)
    means = np.asarray(sums) / np.asarray(counts)
    return np.repeat(means, counts)


@dataclass(frozen=True)
class BracketSearchResult:
    minimizer: float
    minimum_value: float
    at_lower_edge: bool
    at_upper_edge: bool
    iterations: int
    converged: bool
    lower: float
    upper: float


def golden_section_min(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    tol: float | None = None,
    max_iter: int = 200,
    edge_tol: float = 0.0,
) -> BracketSearchResult:
    """Minimize a unimodal scalar function on ``[lower, upper]``.

    The bracket edges are evaluated at the end as well, so a monotone ``f``
    yields the corresponding edge with its flag set.  If ``max_iter`` runs
    out before the bracket shrinks below ``tol`` the result carries
    ``converged=False`` and a :class:`RuntimeWarning` is issued.

    ``edge_tol`` lets an edge win when its value is within that absolute
    amount of the interior optimum, for objectives whose tail sits at the
    rounding floor.  The lower edge is preferred when both qualify.
    """
    if not (np.isfinite(lower) and np.isfinite(upper)) or not lower < upper:
        raise ParameterError(f"need finite lower < upper, got [{lower}, {upper}]")
    if tol is None:
        tol = 1e-8 * (1.0 + abs(upper))
    if tol <= 0:
        raise ParameterError("tol must be positive")
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")

    a, b = float(lower), float(upper)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
        it += 1
    converged = b - a <= tol
    if not converged:
        warnings.warn(
            f"golden-section search stopped after {it} iterations with "
            f"bracket width {b - a:.3g} > tol {tol:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )

    x, fx = (c, fc) if fc <= fd else (d, fd)
    f_lo, f_hi = f(lower), f(upper)
    if f_lo <= fx + edge_tol:
        x, fx = float(lower), f_lo
    elif f_hi <= fx + edge_tol:
        x, fx = float(upper), f_hi
    return BracketSearchResult(
        minimizer=x,
        minimum_value=fx,
        at_lower_edge=x - lower <= tol,
        at_upper_edge=upper - x <= tol,
        iterations=it,
        converged=converged,
        lower=float(lower),
        upper=float(upper),
    )


def rank_average_ties(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    return rankdata(_finite_vector(x), method="average")


def pearson_r(x, y) -> float:
    """Product-moment correlation.

    Raises
    ------
    UndefinedCorrelationError
        If either sequence is constant.
    """
    a = _finite_vector(x, "x")
    b = _finite_vector(y, "y")
    if a.size != b.size:
        raise InputValidationError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise InputValidationError("correlation needs at least 2 observations")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise UndefinedCorrelationError("correlation of a constant sequence is undefined")
    a = a - a.mean()
    b = b - b.mean()
    r = np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(min(1.0, max(-1.0, r)))


def spearman_rho(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    return pearson_r(rank_average_ties(x), rank_average_ties(y))
