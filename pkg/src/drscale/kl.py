"""KL-divergence metrics between an input affinity P and an embedding kernel Q.

P is the symmetrized t-SNE joint distribution with per-point Gaussian
bandwidths calibrated to a perplexity.  Q is built from the embedding
distances scaled by ``alpha`` using one of three kernels:

* Student-t, ``(1 + alpha^2 d^2)^-1`` (the t-SNE choice),
* Gaussian, ``exp(-alpha^2 d^2)``,
* inverse square, ``max(d^2, eps)^-1``, which is the Student-t kernel in the
  limit ``alpha -> inf`` and therefore does not depend on ``alpha``.

Each is normalized over ordered pairs ``i != j``.  Divergences use the
natural logarithm and are evaluated in log space, so a Gaussian kernel at a
large scale gives a large finite value rather than an underflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (
    CalibrationError,
    DivergenceUndefinedError,
    InputValidationError,
    NumericDegeneracyError,
    ParameterError,
)
from .matrix import (
    PairAffinities,
    as_condensed,
    max_normalize,
    n_points_from_length,
    neighbor_index,
)
from .numerics import golden_section_min
from .reports import MetricReport, ScaleCurve

__all__ = [
    "KernelKind",
    "KlReport",
    "PerplexityCalibration",
    "calibrate_perplexity",
    "default_kl_bracket",
    "forced_scale_kl",
    "gaussian_q_limit",
    "joint_p",
    "kl_asymptote",
    "kl_at_scale",
    "kl_at_zero",
    "kl_derivative",
    "kl_divergence",
    "kl_scale_curve",
    "kl_second_derivative",
    "kl_second_derivative_at_zero",
    "q_affinities",
    "scale_normalized_kl",
]

# search range of log(sigma^2) before any expansion
_LOG_VAR_LOW = math.log(1e-20)
_LOG_VAR_HIGH = math.log(1e20)
_MAX_EXPANSIONS = 16
_CHUNK_ELEMENTS = 2_000_000

# scale headroom for the SNKL bracket, relative to 1 / max embedding distance
SNKL_BRACKET_FACTOR = 1e4
# absolute rounding floor of a KL evaluation, relative to its magnitude
_KL_NOISE = 64 * np.finfo(float).eps
_FLAT_RTOL = 8 * np.finfo(float).eps


class KernelKind(enum.Enum):
    STUDENT_T = "student_t"
    GAUSSIAN = "gaussian"
    INVERSE_SQUARE = "inverse_square"


@dataclass(frozen=True)
class PerplexityCalibration:
    """Result of the per-point bandwidth search.

    ``conditional[i]`` holds ``p_{j|i}`` for ``j != i`` in increasing ``j``.
    Points whose neighbours are all equidistant get the uniform distribution
    for every bandwidth; their sigma is reported as ``inf`` and their index
    listed in ``flat_points``.
    """

    sigmas: np.ndarray
    conditional: np.ndarray
    target_perplexity: float
    achieved_entropy: np.ndarray
    flat_points: tuple = ()

    @property
    def n_points(self) -> int:
        return self.conditional.shape[0]

    @property
    def achieved_perplexity(self) -> np.ndarray:
        return np.exp2(self.achieved_entropy)


def _row_entropy(d2: np.ndarray, log_var: np.ndarray):
    """Natural-log entropy and weights for rows of shifted squared distances."""
    beta = 0.5 * np.exp(-log_var)[:, None]
    w = np.exp(-d2 * beta)
    s = w.sum(axis=1)
    h = np.log(s) + beta[:, 0] * (w * d2).sum(axis=1) / s
    return h, w, s


def _calibrate_rows(d2, target, tol, max_iter, point_ids):
    """Bisect log(sigma^2) for each row of ``d2`` (min entry per row is 0).

    ``point_ids`` maps rows back to point indices for error messages.
    """
    m = d2.shape[0]
    lo = np.full(m, _LOG_VAR_LOW)
    hi = np.full(m, _LOG_VAR_HIGH)
    perp = math.exp(target)

    for _ in range(_MAX_EXPANSIONS):
        h_hi, _, _ = _row_entropy(d2, hi)
        low = h_hi < target
        if not low.any():
            break
        hi[low] += _LOG_VAR_HIGH - _LOG_VAR_LOW
    for _ in range(_MAX_EXPANSIONS):
        h_lo, _, _ = _row_entropy(d2, lo)
        high = h_lo > target
        if not high.any():
            break
        lo[high] -= _LOG_VAR_HIGH - _LOG_VAR_LOW
    h_lo, _, _ = _row_entropy(d2, lo)
    bad = np.flatnonzero(h_lo > target + 1e-12)
    if bad.size:
        i = int(point_ids[bad[0]])
        raise CalibrationError(
            f"point {i}: perplexity {perp:g} is unreachable (too many tied nearest neighbours)",
            point=i,
        )

    log_var = np.empty(m)
    done = np.zeros(m, dtype=bool)
    for _ in range(max_iter):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        mid = 0.5 * (lo[active] + hi[active])
        h, _, _ = _row_entropy(d2[active], mid)
        ok = np.abs(np.exp(h) - perp) <= tol
        log_var[active[ok]] = mid[ok]
        done[active[ok]] = True
        rest = ~ok
        up = h > target
        hi[active[rest & up]] = mid[rest & up]
        lo[active[rest & ~up]] = mid[rest & ~up]
    if not done.all():
        i = int(point_ids[np.flatnonzero(~done)[0]])
        raise CalibrationError(
            f"point {i}: perplexity search did not converge in {max_iter} iterations",
            point=i,
        )
    h, w, s = _row_entropy(d2, log_var)
    return log_var, w / s[:, None], h


def calibrate_perplexity(
    d_hi, perplexity: float = 30.0, tol: float = 1e-5, max_iter: int = 200
) -> PerplexityCalibration:
    """Find per-point Gaussian bandwidths matching a target perplexity.

    For each point ``i`` the conditional distribution
    ``p_{j|i} ~ exp(-d_ij^2 / (2 sigma_i^2))`` over ``j != i`` is tuned by
    bisection on ``log sigma_i^2`` until ``2^H`` (``H`` in bits) is within
    ``tol`` of ``perplexity``.
    """
    d = as_condensed(d_hi)
    n = n_points_from_length(d.size)
    if not (1.0 < perplexity < n - 1):
        raise ParameterError(
            f"perplexity must lie strictly between 1 and n-1={n - 1}, got {perplexity}"
        )
    if tol <= 0:
        raise ParameterError("tol must be positive")
    target = math.log(perplexity)

    idx = neighbor_index(n)
    sigmas = np.empty(n)
    conditional = np.empty((n, n - 1))
    entropy = np.empty(n)
    flat: list[int] = []
    step = max(1, _CHUNK_ELEMENTS // max(n - 1, 1))
    for start in range(0, n, step):
        rows = slice(start, min(n, start + step))
        d2 = d[idx[rows]] ** 2
        top = d2.max(axis=1)
        d2 -= d2.min(axis=1, keepdims=True)
        # neighbours equidistant up to rounding of the squared distances
        is_flat = d2.max(axis=1) <= _FLAT_RTOL * top
        if is_flat.any():
            # equidistant neighbours: every bandwidth gives the uniform row
            k = np.flatnonzero(is_flat)
            flat.extend((k + start).tolist())
            sigmas[rows][k] = np.inf
            conditional[rows][k] = 1.0 / (n - 1)
            entropy[rows][k] = math.log(n - 1)
        k = np.flatnonzero(~is_flat)
        if k.size:
            log_var, cond, h = _calibrate_rows(d2[k], target, tol, max_iter, k + start)
            sigmas[rows][k] = np.sqrt(np.exp(log_var))
            conditional[rows][k] = cond
            entropy[rows][k] = h
    return PerplexityCalibration(
        sigmas=sigmas,
        conditional=conditional,
        target_perplexity=float(perplexity),
        achieved_entropy=entropy / math.log(2.0),
        flat_points=tuple(flat),
    )


def joint_p(cal: PerplexityCalibration) -> PairAffinities:
    """Symmetrize conditionals: ``p_ij = (p_{j|i} + p_{i|j}) / 2N``."""
    n = cal.n_points
    i, j = np.triu_indices(n, k=1)
    # row i stores j at column j-1 when j > i; row j stores i < j at column i
    values = (cal.conditional[i, j - 1] + cal.conditional[j, i]) / (2.0 * n)
    return PairAffinities(n, values)


def _check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0:
        raise ParameterError(f"scale must be finite and >= 0, got {alpha}")
    return alpha


def default_epsilon(d_lo) -> float:
    """Floor on squared distances for the inverse-square kernel."""
    sq = as_condensed(d_lo) ** 2
    return 1e-12 * (float(sq.max()) + 1.0)


def _log_q(d_lo, alpha, kernel: KernelKind, epsilon=None) -> np.ndarray:
    """Log of the ordered-pair-normalized kernel values, one per unordered pair."""
    kernel = KernelKind(kernel)
    d = as_condensed(d_lo)
    alpha = _check_alpha(alpha)
    sq = d * d
    if kernel is KernelKind.STUDENT_T:
        if alpha > 1.0:
            # same kernel up to the factor alpha^2, which the normalizer
            # absorbs; keeps the log-weights O(1) for large scales
            logw = -np.log(1.0 / (alpha * alpha) + sq)
        else:
            logw = -np.log1p(alpha * alpha * sq)
    elif kernel is KernelKind.GAUSSIAN:
        logw = -(alpha * alpha) * sq
    else:
        eps = default_epsilon(d) if epsilon is None else float(epsilon)
        if not eps > 0:
            raise ParameterError("epsilon must be positive")
        logw = -np.log(np.maximum(sq, eps))
    log_norm = logsumexp(logw) + math.log(2.0)
    if not np.isfinite(log_norm) or not np.all(np.isfinite(logw)):
        raise NumericDegeneracyError(
            f"{kernel.value} kernel normalizer degenerate at alpha={alpha}"
        )
    return logw - log_norm


def q_affinities(d_lo, alpha: float = 1.0, kernel=KernelKind.STUDENT_T, epsilon=None):
    """Low-dimensional joint distribution Q for the embedding scaled by ``alpha``.

    ``alpha`` is ignored for the inverse-square kernel; ``epsilon`` only
    applies to it.
    """
    logq = _log_q(d_lo, alpha, kernel, epsilon)
    n = n_points_from_length(logq.size)
    q = np.exp(logq)
    if not np.isfinite(q.sum()) or q.sum() <= 0:
        raise NumericDegeneracyError(
            f"{KernelKind(kernel).value} kernel normalizer underflowed at alpha={alpha}"
        )
    return PairAffinities(n, q / (2.0 * q.sum()))


def _match(p: PairAffinities, size: int):
    if p.values.size != size:
        raise InputValidationError(
            f"affinities cover {p.values.size} pairs, distances cover {size}"
        )


def kl_divergence(p: PairAffinities, q: PairAffinities) -> float:
    """``sum_{i != j} p_ij log(p_ij / q_ij)``; pairs with ``p_ij = 0`` contribute 0."""
    if p.n_points != q.n_points:
        raise InputValidationError(f"P has {p.n_points} points, Q has {q.n_points}")
    mask = p.values > 0
    if np.any(q.values[mask] == 0):
        raise DivergenceUndefinedError("q is zero where p is positive")
    pv = p.values[mask]
    # clip rounding noise below the Gibbs bound
    return max(0.0, float(2.0 * np.sum(pv * (np.log(pv) - np.log(q.values[mask])))))


def _kl_from_log_q(p: PairAffinities, logq: np.ndarray) -> float:
    mask = p.values > 0
    pv = p.values[mask]
    return max(0.0, float(2.0 * np.sum(pv * (np.log(pv) - logq[mask]))))


def kl_at_scale(p: PairAffinities, d_lo, alpha: float = 1.0,
                kernel=KernelKind.STUDENT_T, epsilon=None) -> float:
    """KL divergence between P and the kernel Q of ``alpha * d_lo``."""
    d = as_condensed(d_lo)
    _match(p, d.size)
    return _kl_from_log_q(p, _log_q(d, alpha, kernel, epsilon))


def kl_at_zero(p: PairAffinities) -> float:
    """KL value at scale 0, where every kernel is uniform: ``sum p log p + log N(N-1)``."""
    n = p.n_points
    pv = p.values[p.values > 0]
    return float(2.0 * np.sum(pv * np.log(pv)) + math.log(n * (n - 1)))


def kl_asymptote(p: PairAffinities, d_lo, epsilon=None) -> float:
    """Limit of the Student-t KL as the scale grows: the inverse-square KL."""
    return kl_at_scale(p, d_lo, 0.0, KernelKind.INVERSE_SQUARE, epsilon)


def kl_derivative(p: PairAffinities, d_lo, alpha: float) -> float:
    """First derivative of the Student-t KL with respect to the scale."""
    d = as_condensed(d_lo)
    _match(p, d.size)
    a = _check_alpha(alpha)
    sq = d * d
    u = 1.0 + a * a * sq
    z = 2.0 * np.sum(1.0 / u)
    z1 = -2.0 * np.sum(2.0 * a * sq / u**2)
    return float(2.0 * np.sum(p.values * 2.0 * a * sq / u) + z1 / z)


def kl_second_derivative(p: PairAffinities, d_lo, alpha: float) -> float:
    """Second derivative of the Student-t KL with respect to the scale."""
    d = as_condensed(d_lo)
    _match(p, d.size)
    a = _check_alpha(alpha)
    sq = d * d
    u = 1.0 + a * a * sq
    z = 2.0 * np.sum(1.0 / u)
    z1 = -2.0 * np.sum(2.0 * a * sq / u**2)
    z2 = 2.0 * np.sum(-2.0 * sq / u**2 + 2.0 * (2.0 * a * sq) ** 2 / u**3)
    attract = 2.0 * np.sum(p.values * (2.0 * sq / u - (2.0 * a * sq) ** 2 / u**2))
    return float(attract + z2 / z - (z1 / z) ** 2)


def kl_second_derivative_at_zero(p: PairAffinities, d_lo) -> float:
    """``sum_{i != j} 2 p_ij (d_ij^2 - mean d^2)`` over embedding distances.

    Negative values mean the KL curve has a local maximum at scale 0 and
    falls as the embedding grows, which is the usual case for embeddings
    that put high-affinity pairs close together.
    """
    d = as_condensed(d_lo)
    _match(p, d.size)
    sq = d * d
    return float(2.0 * (2.0 * np.dot(p.values, sq) - sq.mean()))


def gaussian_q_limit(d_lo) -> PairAffinities:
    """Gaussian-kernel Q as the scale tends to infinity.

    All mass sits uniformly on the pairs at the minimum embedding distance.
    """
    d = as_condensed(d_lo)
    sq = d * d
    hit = sq == sq.min()
    values = np.where(hit, 1.0 / (2.0 * hit.sum()), 0.0)
    return PairAffinities(n_points_from_length(d.size), values)


def default_kl_bracket(d_lo) -> float:
    """Upper end of the SNKL scale bracket: ``SNKL_BRACKET_FACTOR / max(d_lo)``."""
    d = as_condensed(d_lo)
    top = float(d.max())
    if top <= 0:
        raise ParameterError("embedding distances are all zero")
    return SNKL_BRACKET_FACTOR / top


@dataclass(frozen=True)
class KlReport:
    value: float
    kernel: KernelKind
    alpha: float
    at_zero: float
    asymptote: float
    second_derivative_at_zero: float
    at_lower_edge: bool = False
    at_upper_edge: bool = False
    converged: bool = True
    bracket_upper: float | None = None

    def to_metric_report(self, metric: str = "SNKL") -> MetricReport:
        return MetricReport(
            metric,
            self.value,
            optimal_alpha=self.alpha,
            diagnostics={
                "at_lower_edge": self.at_lower_edge,
                "at_upper_edge": self.at_upper_edge,
                "converged": self.converged,
                "bracket_upper": self.bracket_upper,
                "kl_at_zero": self.at_zero,
                "kl_asymptote": self.asymptote,
                "second_derivative_at_zero": self.second_derivative_at_zero,
            },
        )


def scale_normalized_kl(p: PairAffinities, d_lo, bracket_upper: float | None = None,
                        tol: float | None = None, max_iter: int = 200) -> KlReport:
    """Minimum over the scale of the Student-t KL (golden-section search).

    The bracket is ``[0, bracket_upper]``, by default
    :func:`default_kl_bracket`.  A minimizer at the upper edge usually means
    the curve is still falling there (as in the asymptote-from-above case)
    and is flagged, not raised.
    """
    d = as_condensed(d_lo)
    _match(p, d.size)
    upper = default_kl_bracket(d) if bracket_upper is None else float(bracket_upper)
    if not upper > 0:
        raise ParameterError("bracket_upper must be positive")
    at_zero = kl_at_zero(p)
    res = golden_section_min(
        lambda a: kl_at_scale(p, d, a), 0.0, upper, tol=tol, max_iter=max_iter,
        edge_tol=_KL_NOISE * (1.0 + at_zero),
    )
    return KlReport(
        value=res.minimum_value,
        kernel=KernelKind.STUDENT_T,
        alpha=res.minimizer,
        at_zero=at_zero,
        asymptote=kl_asymptote(p, d),
        second_derivative_at_zero=kl_second_derivative_at_zero(p, d),
        at_lower_edge=res.at_lower_edge,
        at_upper_edge=res.at_upper_edge,
        converged=res.converged,
        bracket_upper=upper,
    )


def forced_scale_kl(d_hi, d_lo, perplexity: float = 30.0,
                    p: PairAffinities | None = None) -> float:
    """Student-t KL after max-normalizing both distance sets.

    ``p`` may be passed to reuse an affinity already calibrated on the
    max-normalized input distances.
    """
    b = max_normalize(d_lo)
    if p is None:
        p = joint_p(calibrate_perplexity(max_normalize(d_hi), perplexity))
    return kl_at_scale(p, b, 1.0, KernelKind.STUDENT_T)


def kl_scale_curve(p: PairAffinities, d_lo, alphas,
                   kernel=KernelKind.STUDENT_T, epsilon=None) -> ScaleCurve:
    """KL at each scale in ``alphas``; failed samples are NaN with an error entry."""
    grid = np.asarray(alphas, dtype=np.float64).ravel()
    if grid.size == 0:
        raise ParameterError("need at least one scale")
    kernel = KernelKind(kernel)
    values = np.empty(grid.size)
    errors = {}
    for k, a in enumerate(grid):
        try:
            values[k] = kl_at_scale(p, d_lo, a, kernel, epsilon)
        except (NumericDegeneracyError, DivergenceUndefinedError, ParameterError) as exc:
            values[k] = np.nan
            errors[k] = str(exc)
    name = {"student_t": "KL", "gaussian": "KLG", "inverse_square": "KLINF"}[kernel.value]
    return ScaleCurve(name, grid, values, errors)
