"""Scale-sensitivity experiments.

* :func:`noise_ladder` degrades an embedding step by step with Gaussian
  noise and evaluates metrics on a randomly rescaled copy at every step.
* :func:`metric_iteration_correlation` summarizes a ladder by the Pearson
  correlation between step index and metric value.
* :func:`rank_embeddings` and :func:`ordering_frequencies` rank labelled
  embeddings under a metric and tabulate how often each ordering occurs.

DR algorithms are not part of this package; reference embeddings for the
ordering experiments are built from the data itself (see
:func:`reference_embeddings`).
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputValidationError, MetricError, ParameterError, UndefinedCorrelationError
from .evaluate import HIGHER_IS_BETTER, KL_METRICS, Evaluator, parse_metrics
from .matrix import as_data_matrix, pairwise_euclidean
from .numerics import pearson_r, spearman_rho

__all__ = [
    "GROWTH_SCHEDULES",
    "LadderRun",
    "OrderingTable",
    "Ranking",
    "metric_iteration_correlation",
    "metric_score_correlations",
    "noise_ladder",
    "ordering_frequencies",
    "random_embedding",
    "rank_embeddings",
    "reference_embeddings",
    "run_ordering_trials",
    "structured_dataset",
]

DEFAULT_SIGMA_FRACTION = 0.0025

GROWTH_SCHEDULES = {
    "constant": lambda k: 1.0,
    "linear": lambda k: float(k),
    "quadratic": lambda k: float(k * k),
    "sqrt": lambda k: math.sqrt(k),
}


def random_embedding(n: int, t: int = 2, seed=None) -> np.ndarray:
    """``n`` points drawn uniformly from the unit hypercube ``[0, 1]^t``."""
    if n < 2 or t < 1:
        raise ParameterError(f"need n >= 2 and t >= 1, got n={n}, t={t}")
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, t))


def structured_dataset(n: int = 300, seed=None, clusters: int = 5) -> np.ndarray:
    """A 2-D point set with cluster structure: Gaussian blobs placed on a ring.

    Being intrinsically 2-D, the data is its own distance-preserving
    embedding, which makes it a perfect reference for the experiments.
    """
    if n < 2:
        raise ParameterError("need n >= 2")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % clusters
    angle = 2.0 * np.pi * labels / clusters
    radius = 1.0 + 0.5 * (labels % 2)
    centers = np.column_stack([np.cos(angle), np.sin(angle)]) * radius[:, None]
    return centers + rng.normal(scale=0.15, size=(n, 2))


def reference_embeddings(data, seed=None, noise: float = 0.1) -> dict[str, np.ndarray]:
    """Constructed good / degraded / structureless embeddings of 2-D ``data``.

    ``reference`` is the data itself, ``noisy`` adds isotropic noise with
    standard deviation ``noise`` times the data diameter, and ``random`` is a
    uniform sample of the unit square.  Expected quality order under any
    sensible metric: reference < noisy < random.
    """
    x = as_data_matrix(data)
    if x.shape[1] != 2:
        raise InputValidationError("reference embeddings need 2-D data")
    rng = np.random.default_rng(seed)
    diameter = float(pairwise_euclidean(x).max())
    return {
        "reference": x.copy(),
        "noisy": x + rng.normal(scale=noise * diameter, size=x.shape),
        "random": rng.uniform(0.0, 1.0, size=x.shape),
    }


@dataclass
class LadderRun:
    """Values of each metric along a noise ladder.

    Row ``k`` of ``values`` belongs to embedding ``Y_k``; row 0 is the
    unperturbed embedding.  ``sigmas[k]`` is the noise standard deviation
    added at step ``k`` and ``factors[k]`` the rescale applied before
    evaluation.  Failed evaluations are NaN with a message in ``errors``.
    """

    metrics: tuple
    seed: int
    sigmas: np.ndarray
    factors: np.ndarray
    values: np.ndarray
    errors: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.sigmas)

    def column(self, metric: str) -> np.ndarray:
        return self.values[:, self.metrics.index(metric.upper())]


def _step_streams(seed, steps):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(steps)]


def noise_ladder(
    y0,
    d_hi,
    metrics=("NS", "SNS"),
    steps: int = 50,
    base_sigma: float | None = None,
    growth="linear",
    rescale_low: float = 0.1,
    rescale_high: float = 10.0,
    seed: int = 0,
    perplexity: float = 30.0,
    evaluator: Evaluator | None = None,
    workers: int = 1,
) -> LadderRun:
    """Evaluate metrics on progressively noisier, randomly rescaled embeddings.

    ``Y_0 = y0`` and ``Y_k = Y_{k-1} + N(0, (base_sigma * growth(k))^2)``
    for ``k = 1 .. steps-1``; the run therefore has ``steps`` rows.  Each
    ``Y_k`` is multiplied by a factor drawn uniformly from
    ``[rescale_low, rescale_high]`` before the metrics are computed.  Step
    ``k`` draws from its own RNG stream spawned from ``seed``, so results do
    not depend on evaluation order.

    ``base_sigma`` defaults to 0.25% of the diameter of ``y0``.  With linear
    growth the accumulated noise after ``k`` steps has standard deviation
    ``base_sigma * sqrt(k(k+1)(2k+1)/6)``, about half the diameter at step
    49, so structure is destroyed gradually rather than within the first
    few steps.
    """
    y = as_data_matrix(y0)
    names = parse_metrics(metrics)
    if steps < 1:
        raise ParameterError("steps must be at least 1")
    if not rescale_low > 0 or rescale_high < rescale_low:
        raise ParameterError(
            f"need 0 < rescale_low <= rescale_high, got [{rescale_low}, {rescale_high}]"
        )
    schedule = GROWTH_SCHEDULES.get(growth) if isinstance(growth, str) else growth
    if schedule is None:
        raise ParameterError(f"unknown growth schedule {growth!r}")
    if evaluator is None:
        evaluator = Evaluator(d_hi, perplexity)
    if evaluator.n_points != y.shape[0]:
        raise InputValidationError(
            f"embedding has {y.shape[0]} points, input distances cover {evaluator.n_points}"
        )
    if base_sigma is None:
        base_sigma = DEFAULT_SIGMA_FRACTION * float(pairwise_euclidean(y).max())
    if base_sigma < 0:
        raise ParameterError("base_sigma must be >= 0")

    streams = _step_streams(seed, steps)
    sigmas = np.zeros(steps)
    factors = np.empty(steps)
    embeddings = []
    current = y
    for k, rng in enumerate(streams):
        factors[k] = rng.uniform(rescale_low, rescale_high)
        if k > 0:
            sigmas[k] = base_sigma * schedule(k)
            current = current + rng.normal(scale=1.0, size=y.shape) * sigmas[k]
        embeddings.append(current)

    if any(m in KL_METRICS for m in names):
        try:
            evaluator.p  # calibrate once before any threads start
        except MetricError:
            pass  # every KL cell will record the failure

    def evaluate(k):
        d_lo = pairwise_euclidean(embeddings[k] * factors[k])
        return [evaluator.safe_report(m, d_lo) for m in names]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, range(steps)))
    else:
        rows = [evaluate(k) for k in range(steps)]

    values = np.array([[r.value for r in row] for row in rows], dtype=np.float64)
    errors = {
        (k, r.metric): r.diagnostics["error"]
        for k, row in enumerate(rows) for r in row if r.failed
    }
    return LadderRun(
        metrics=names,
        seed=seed,
        sigmas=sigmas,
        factors=factors,
        values=values,
        errors=errors,
        parameters={
            "steps": steps,
            "base_sigma": float(base_sigma),
            "growth": growth if isinstance(growth, str) else getattr(growth, "__name__", "custom"),
            "rescale_low": float(rescale_low),
            "rescale_high": float(rescale_high),
            "perplexity": float(perplexity),
        },
    )


def metric_iteration_correlation(run: LadderRun, constant_rtol: float = 1e-9,
                                 constant_atol: float = 1e-12) -> dict:
    """Pearson correlation of each metric with the step index.

    SGS is negated first so that, for every metric, +1 means "gets worse as
    noise accumulates".  A metric whose values are constant up to
    ``constant_rtol`` (relative) plus ``constant_atol``, or that has fewer
    than 3 valid steps, maps to ``None``.  The absolute floor matters for
    values at the rounding level, such as SNS of a perfect embedding.
    """
    out = {}
    steps = np.arange(run.steps, dtype=np.float64)
    for j, metric in enumerate(run.metrics):
        v = run.values[:, j]
        ok = np.isfinite(v)
        if ok.sum() < 3:
            out[metric] = None
            continue
        x, y = steps[ok], v[ok]
        if metric in HIGHER_IS_BETTER:
            y = -y
        if np.ptp(y) <= constant_rtol * np.abs(y).max() + constant_atol:
            out[metric] = None
            continue
        try:
            out[metric] = pearson_r(x, y)
        except UndefinedCorrelationError:
            out[metric] = None
    return out


@dataclass(frozen=True)
class Ranking:
    """Labels from best to worst, their scores (lower is better) and any ties."""

    labels: tuple
    scores: dict
    ties: tuple = ()


def rank_embeddings(d_hi, embeddings: Mapping[str, np.ndarray], metric: str,
                    perplexity: float = 30.0, evaluator: Evaluator | None = None) -> Ranking:
    """Sort labelled embeddings by a metric, best first.

    Ties are broken by the order of ``embeddings`` and listed in
    ``Ranking.ties``.
    """
    (metric,) = parse_metrics([metric])
    if len(embeddings) < 2:
        raise ParameterError("need at least 2 embeddings to rank")
    if evaluator is None:
        evaluator = Evaluator(d_hi, perplexity)
    scores = {}
    for label, emb in embeddings.items():
        y = as_data_matrix(emb)
        if y.shape[0] != evaluator.n_points:
            raise InputValidationError(
                f"embedding {label!r} has {y.shape[0]} points, expected {evaluator.n_points}"
            )
        scores[label] = evaluator.score(metric, pairwise_euclidean(y))
    order = list(embeddings)
    labels = tuple(sorted(order, key=lambda k: (scores[k], order.index(k))))
    ties = tuple(
        (a, b) for a, b in itertools.combinations(labels, 2) if scores[a] == scores[b]
    )
    return Ranking(labels, scores, ties)


@dataclass(frozen=True)
class OrderingTable:
    """Percentages of trials producing each full ordering and each pairwise win.

    ``orderings`` has one entry per permutation of ``labels`` (best first);
    ``pairwise[(a, b)]`` is the percentage of trials where ``a`` scored
    strictly better than ``b``.
    """

    labels: tuple
    trials: int
    orderings: dict
    pairwise: dict

    def percent(self, *ordering) -> float:
        return self.orderings[tuple(ordering)]


def ordering_frequencies(trials: Sequence[Mapping[str, float]],
                         higher_is_better: bool = False) -> OrderingTable:
    """Tabulate orderings over trials of per-label scores.

    Each trial maps every label to a score; lower is better unless
    ``higher_is_better``.  Ties are broken by the label order of the first
    trial.
    """
    if not trials:
        raise ParameterError("need at least one trial")
    labels = tuple(trials[0])
    sign = -1.0 if higher_is_better else 1.0
    counts = {perm: 0 for perm in itertools.permutations(labels)}
    wins = {(a, b): 0 for a in labels for b in labels if a != b}
    for t, trial in enumerate(trials):
        if set(trial) != set(labels):
            missing = set(labels) ^ set(trial)
            raise InputValidationError(
                f"trial {t} label set differs: {', '.join(sorted(map(str, missing)))}"
            )
        key = tuple(sorted(labels, key=lambda k: (sign * trial[k], labels.index(k))))
        counts[key] += 1
        for a, b in wins:
            if sign * trial[a] < sign * trial[b]:
                wins[(a, b)] += 1
    n = len(trials)
    return OrderingTable(
        labels=labels,
        trials=n,
        orderings={k: 100.0 * v / n for k, v in counts.items()},
        pairwise={k: 100.0 * v / n for k, v in wins.items()},
    )


def run_ordering_trials(
    d_hi,
    embeddings: Mapping[str, Sequence[np.ndarray]] | Mapping[str, np.ndarray],
    metric: str,
    trials: int = 1,
    rescale_low: float = 1.0,
    rescale_high: float = 1.0,
    seed: int = 0,
    perplexity: float = 30.0,
    evaluator: Evaluator | None = None,
) -> OrderingTable:
    """Rank embeddings repeatedly and tabulate the orderings.

    ``embeddings`` maps each label to one matrix or to a list of matrices
    (e.g. repeated runs of a method); trial ``t`` uses entry ``t mod len``.
    In every trial each embedding is rescaled by an independent factor drawn
    log-uniformly from ``[rescale_low, rescale_high]``.
    """
    (metric,) = parse_metrics([metric])
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if not 0 < rescale_low <= rescale_high:
        raise ParameterError("need 0 < rescale_low <= rescale_high")
    runs = {
        k: (list(v) if isinstance(v, (list, tuple)) else [v]) for k, v in embeddings.items()
    }
    if len(runs) < 2:
        raise ParameterError("need at least 2 embeddings")
    if evaluator is None:
        evaluator = Evaluator(d_hi, perplexity)
    lo, hi = math.log(rescale_low), math.log(rescale_high)
    fixed_scale = rescale_low == rescale_high
    cache: dict = {}
    table = []
    for t, rng in enumerate(_step_streams(seed, trials)):
        scores = {}
        for label, mats in runs.items():
            run = t % len(mats)
            factor = rescale_low if fixed_scale else math.exp(rng.uniform(lo, hi))
            if fixed_scale and (label, run) in cache:
                scores[label] = cache[(label, run)]
                continue
            d_lo = pairwise_euclidean(as_data_matrix(mats[run]) * factor)
            if d_lo.size != evaluator.d_hi.size:
                raise InputValidationError(
                    f"embedding {label!r} does not match the input point count"
                )
            scores[label] = cache[(label, run)] = evaluator.score(metric, d_lo)
        table.append(scores)
    return ordering_frequencies(table)


def metric_score_correlations(scores: Mapping[str, Sequence[float]]) -> dict:
    """Pairwise Spearman correlation between score lists of several metrics."""
    names = list(scores)
    lengths = {len(v) for v in scores.values()}
    if len(lengths) != 1:
        raise InputValidationError("all metrics need the same number of scores")
    out = {}
    for a, b in itertools.combinations_with_replacement(names, 2):
        try:
            out[(a, b)] = spearman_rho(scores[a], scores[b])
        except MetricError:
            out[(a, b)] = None
    return out
