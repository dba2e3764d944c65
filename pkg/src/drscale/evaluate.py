"""Metric registry: evaluate any supported metric by its identifier.

Identifiers::

    RS     raw stress                       scale-sensitive
    NS     normalized stress                scale-sensitive
    SNS    scale-normalized stress          invariant
    NMS    non-metric (Kruskal) stress      invariant
    SGS    Shepard goodness (higher=better) invariant
    FSNS   forced-scale normalized stress   invariant
    KL     Student-t KL at scale 1          scale-sensitive
    KLG    Gaussian KL at scale 1           scale-sensitive
    SNKL   scale-normalized KL              invariant
    FSKL   forced-scale KL                  invariant
    KLINF  inverse-square KL (scale -> inf) invariant
"""

from __future__ import annotations

from . import kl, stress
from .errors import MetricError, ParameterError
from .matrix import PairAffinities, as_condensed, max_normalize, n_points_from_length
from .reports import MetricReport

METRICS = ("RS", "NS", "SNS", "NMS", "SGS", "FSNS", "KL", "KLG", "SNKL", "FSKL", "KLINF")
STRESS_METRICS = ("RS", "NS", "SNS", "NMS", "SGS", "FSNS")
KL_METRICS = ("KL", "KLG", "SNKL", "FSKL", "KLINF")
SCALE_INVARIANT = frozenset({"SNS", "NMS", "SGS", "FSNS", "SNKL", "FSKL", "KLINF"})
HIGHER_IS_BETTER = frozenset({"SGS"})


def parse_metrics(spec) -> tuple[str, ...]:
    """Accept ``"NS,SNS"``, a list of names, or ``"all"``."""
    if isinstance(spec, str):
        names = [s.strip().upper() for s in spec.split(",") if s.strip()]
    else:
        names = [str(s).strip().upper() for s in spec]
    if names == ["ALL"]:
        return METRICS
    unknown = [n for n in names if n not in METRICS]
    if unknown:
        raise ParameterError(
            f"unknown metric(s) {', '.join(unknown)}; choose from {', '.join(METRICS)}"
        )
    if not names:
        raise ParameterError("no metrics selected")
    return tuple(dict.fromkeys(names))


class Evaluator:
    """Evaluates metrics of embeddings against one set of input distances.

    The input affinity P for the KL metrics is calibrated lazily, once, on
    the max-normalized input distances (P does not depend on the overall
    scale of the input distances, and FSKL requires exactly that P).

    Parameters
    ----------
    d_hi : array_like
        Condensed input-space distances.
    perplexity : float
        Target perplexity for P.
    affinities : PairAffinities, optional
        Use this P instead of calibrating one.
    """

    def __init__(self, d_hi, perplexity: float = 30.0,
                 affinities: PairAffinities | None = None):
        self.d_hi = as_condensed(d_hi)
        self.n_points = n_points_from_length(self.d_hi.size)
        self.perplexity = perplexity
        self._p = affinities

    @property
    def p(self) -> PairAffinities:
        if self._p is None:
            cal = kl.calibrate_perplexity(max_normalize(self.d_hi), self.perplexity)
            self._p = kl.joint_p(cal)
        return self._p

    def report(self, metric: str, d_lo) -> MetricReport:
        """Evaluate ``metric``; raises :class:`MetricError` subclasses on failure."""
        metric = metric.upper()
        d_hi = self.d_hi
        if metric == "RS":
            return MetricReport(metric, stress.raw_stress(d_hi, d_lo))
        if metric == "NS":
            return MetricReport(metric, stress.normalized_stress(d_hi, d_lo))
        if metric == "SNS":
            return stress.scale_normalized_stress(d_hi, d_lo)
        if metric == "NMS":
            return MetricReport(metric, stress.nonmetric_stress(d_hi, d_lo))
        if metric == "SGS":
            return MetricReport(metric, stress.shepard_goodness(d_hi, d_lo))
        if metric == "FSNS":
            return MetricReport(metric, stress.forced_scale_normalized_stress(d_hi, d_lo))
        if metric == "KL":
            return MetricReport(metric, kl.kl_at_scale(self.p, d_lo, 1.0))
        if metric == "KLG":
            return MetricReport(
                metric, kl.kl_at_scale(self.p, d_lo, 1.0, kl.KernelKind.GAUSSIAN)
            )
        if metric == "SNKL":
            return kl.scale_normalized_kl(self.p, d_lo).to_metric_report("SNKL")
        if metric == "FSKL":
            return MetricReport(metric, kl.forced_scale_kl(d_hi, d_lo, p=self.p))
        if metric == "KLINF":
            return MetricReport(metric, kl.kl_asymptote(self.p, d_lo))
        raise ParameterError(f"unknown metric {metric!r}")

    def safe_report(self, metric: str, d_lo) -> MetricReport:
        """Like :meth:`report` but records failures instead of raising."""
        try:
            return self.report(metric, d_lo)
        except MetricError as exc:
            return MetricReport(
                metric.upper(), float("nan"),
                diagnostics={"error": f"{type(exc).__name__}: {exc}"},
            )

    def value(self, metric: str, d_lo) -> float:
        return self.report(metric, d_lo).value

    def score(self, metric: str, d_lo) -> float:
        """Metric value oriented so that lower is better (SGS is negated)."""
        v = self.value(metric, d_lo)
        return -v if metric.upper() in HIGHER_IS_BETTER else v
