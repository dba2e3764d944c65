"""Stress-family metrics.

All functions take two condensed distance vectors: ``d_hi`` holds the
input-space distances and ``d_lo`` the embedding distances for the same
pairs.  Sums run over unordered pairs ``i < j``; the ratio metrics do not
depend on that choice, raw stress is half its ordered-pair value.

Scale behaviour
---------------
RS and NS change when the embedding is scaled.  SNS, NMS, SGS and FSNS do
not.  NS carries the square root; FSNS keeps an unsquared denominator, so
its magnitude is not comparable to NS.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, PairingError, ParameterError
from .matrix import as_condensed, max_normalize
from .numerics import pava_isotonic, spearman_rho
from .reports import MetricReport, ScaleCurve

__all__ = [
    "forced_scale_normalized_stress",
    "nonmetric_stress",
    "normalized_stress",
    "optimal_scale_alpha",
    "raw_stress",
    "reversing_scales",
    "scale_normalized_stress",
    "shepard_goodness",
    "stress_at_scale",
    "stress_scale_curve",
]


def _pair(d_hi, d_lo) -> tuple[np.ndarray, np.ndarray]:
    a = as_condensed(d_hi)
    b = as_condensed(d_lo)
    if a.size != b.size:
        raise PairingError(f"distance vectors differ in length: {a.size} vs {b.size}")
    return a, b


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise ParameterError(f"scale must be finite and >= 0, got {alpha}")
    return alpha


def raw_stress(d_hi, d_lo) -> float:
    a, b = _pair(d_hi, d_lo)
    return float(np.sum((a - b) ** 2))


def stress_at_scale(d_hi, d_lo, alpha: float) -> float:
    """Normalized stress of the embedding scaled by ``alpha``.

    At ``alpha = 0`` the result is exactly 1.
    """
    a, b = _pair(d_hi, d_lo)
    alpha = _check_alpha(alpha)
    denom = np.sum(a * a)
    if denom <= 0:
        raise DegenerateInputError("input distances are all zero")
    return float(np.sqrt(np.sum((a - alpha * b) ** 2) / denom))


def normalized_stress(d_hi, d_lo) -> float:
    """``sqrt(sum((d_hi - d_lo)**2) / sum(d_hi**2))``."""
    return stress_at_scale(d_hi, d_lo, 1.0)


def optimal_scale_alpha(d_hi, d_lo) -> float:
    """Scale minimizing normalized stress: ``sum(d_hi*d_lo) / sum(d_lo**2)``.

    The squared stress is a parabola in the scale, so this stationary point
    is its unique minimum.
    """
    a, b = _pair(d_hi, d_lo)
    denom = np.sum(b * b)
    if denom <= 0:
        raise DegenerateInputError("embedding distances are all zero")
    return float(np.dot(a, b) / denom)


def scale_normalized_stress(d_hi, d_lo) -> MetricReport:
    """Normalized stress at the optimal scale; reports that scale as well."""
    alpha = optimal_scale_alpha(d_hi, d_lo)
    value = stress_at_scale(d_hi, d_lo, alpha)
    return MetricReport("SNS", value, optimal_alpha=alpha)


def shepard_goodness(d_hi, d_lo) -> float:
    """Spearman correlation of the Shepard diagram (higher is better)."""
    a, b = _pair(d_hi, d_lo)
    return spearman_rho(a, b)


def nonmetric_stress(d_hi, d_lo) -> float:
    """Kruskal non-metric stress without the square root.

    Pairs are ordered by ``d_hi`` (ties by ``d_lo``, then pair position) and
    the embedding distances are isotonically regressed in that order.  The
    resulting disparities scale with the embedding, so the ratio does not.
    """
    a, b = _pair(d_hi, d_lo)
    denom = np.sum(b * b)
    if denom <= 0:
        raise DegenerateInputError("embedding distances are all zero")
    order = np.lexsort((np.arange(a.size), b, a))
    lo_sorted = b[order]
    disparities = pava_isotonic(lo_sorted)
    return float(np.sum((disparities - lo_sorted) ** 2) / denom)


def forced_scale_normalized_stress(d_hi, d_lo) -> float:
    """Stress after dividing each side by its own maximum distance.

    The denominator is the plain sum of the normalized input distances.
    """
    a, b = _pair(d_hi, d_lo)
    a = max_normalize(a)
    b = max_normalize(b)
    return float(np.sum((a - b) ** 2) / np.sum(a))


def stress_scale_curve(d_hi, d_lo, alphas) -> ScaleCurve:
    grid = np.asarray(alphas, dtype=np.float64).ravel()
    if grid.size == 0:
        raise ParameterError("need at least one scale")
    values = np.array([stress_at_scale(d_hi, d_lo, a) for a in grid])
    return ScaleCurve("NS", grid, values)


def reversing_scales(d_hi, d_lo_better, d_lo_worse, max_doublings: int = 200):
    """Find scales at which normalized stress prefers the worse embedding.

    Returns ``(alpha_better, alpha_worse)`` such that
    ``stress_at_scale(d_hi, d_lo_better, alpha_better)`` exceeds
    ``stress_at_scale(d_hi, d_lo_worse, alpha_worse)``, or ``None`` when no
    such pair exists (the worse embedding has no positive correlation with
    the input distances, so its best achievable stress is 1).
    """
    alpha_w = optimal_scale_alpha(d_hi, d_lo_worse)
    if alpha_w <= 0:
        return None
    target = stress_at_scale(d_hi, d_lo_worse, alpha_w)
    alpha_b = optimal_scale_alpha(d_hi, d_lo_better)
    if alpha_b <= 0:
        alpha_b = 1.0
    # stress grows without bound in the scale, so doubling must cross target
    for _ in range(max_doublings):
        if stress_at_scale(d_hi, d_lo_better, alpha_b) > target:
            return alpha_b, alpha_w
        alpha_b *= 2.0
    return None
