"""Plain result records returned by the metric functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    """One metric evaluated for one embedding.

    ``optimal_alpha`` is filled by the metrics that search over scale (SNS,
    SNKL).  ``diagnostics`` carries metric-specific extras such as
    bracket-edge flags, or ``{"error": ...}`` when evaluation failed.
    """

    metric: str
    value: float
    optimal_alpha: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return "error" in self.diagnostics

    def to_dict(self) -> dict:
        out = {"metric": self.metric, "value": self.value}
        if self.optimal_alpha is not None:
            out["optimal_alpha"] = self.optimal_alpha
        if self.diagnostics:
            out["diagnostics"] = dict(self.diagnostics)
        return out


# Stress metrics report through the same record.
StressReport = MetricReport


@dataclass(frozen=True)
class ScaleCurve:
    """Metric values sampled at a sequence of scale factors.

    Samples that failed to evaluate hold NaN in ``values`` and an entry in
    ``errors`` keyed by their position.
    """

    metric: str
    alphas: np.ndarray
    values: np.ndarray
    errors: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.alphas)

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.alphas.tolist(), self.values.tolist()))
