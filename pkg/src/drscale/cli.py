"""Command-line interface.

Subcommands::

    drscale metrics      evaluate metrics for one or more embeddings
    drscale scale-curve  sample metrics over a grid of embedding scales
    drscale sensitivity  run a noise ladder and correlate metrics with steps
    drscale rank         tabulate embedding orderings over rescaled trials

Exit status is 0 on success, 2 for unusable input (missing or malformed
files, point-count mismatch, bad parameters) and 3 when some metric could
not be evaluated; failures are recorded in the report in that case.

The report is JSON, written to ``--out`` or printed.  With ``--out
report.json`` the delimited tables (curves, ladder rows, orderings) are
written next to it as ``report.<name>.csv``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kl, stress
from .errors import MetricError, ParameterError
from .evaluate import SCALE_INVARIANT, Evaluator, parse_metrics
from .experiments import (
    GROWTH_SCHEDULES,
    metric_iteration_correlation,
    noise_ladder,
    run_ordering_trials,
)
from .io import ReportDocument, atomic_write_text, format_table, load_matrix
from .matrix import as_condensed, n_points_from_length, pairwise_euclidean

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_METRIC_FAILURE = 3


@dataclass
class CommandResult:
    """A finished command: its report, extra tables and exit status."""

    document: ReportDocument
    status: int = EXIT_OK
    tables: dict = field(default_factory=dict)

    def write(self, out=None, stream=None) -> None:
        if out is None:
            (stream or sys.stdout).write(self.document.to_json())
            return
        out = Path(out)
        self.document.write(out)
        for name, text in sorted(self.tables.items()):
            atomic_write_text(out.with_name(f"{out.stem}.{name}.csv"), text)


@dataclass
class Inputs:
    d_hi: np.ndarray
    data: np.ndarray | None
    embeddings: dict


def _labels(paths, labels) -> list[str]:
    if labels:
        if len(labels) != len(paths):
            raise ParameterError(
                f"got {len(labels)} --label values for {len(paths)} embeddings"
            )
        names = list(labels)
    else:
        names = [Path(p).stem for p in paths]
    seen: dict[str, int] = {}
    out = []
    for name in names:
        seen[name] = seen.get(name, 0) + 1
        out.append(name if seen[name] == 1 else f"{name}_{seen[name]}")
    return out


def load_inputs(doc: ReportDocument, data_path, embedding_paths, labels=None,
                precomputed: bool = False, header: bool = False) -> Inputs:
    """Read the input data and embeddings and check their point counts."""
    data = load_matrix(data_path, precomputed=precomputed, header=header)
    doc.add_input("data", data_path, data)
    if precomputed:
        d_hi = as_condensed(data)
        n = n_points_from_length(d_hi.size)
        data = None
    else:
        d_hi = pairwise_euclidean(data)
        n = data.shape[0]
    embeddings = {}
    for label, path in zip(_labels(embedding_paths, labels), embedding_paths):
        y = load_matrix(path, header=header)
        if y.shape[0] != n:
            raise MetricError(
                f"embedding {label!r} ({path}) has {y.shape[0]} points, data has {n}"
            )
        doc.add_input(f"embedding:{label}", path, y)
        embeddings[label] = y
    return Inputs(d_hi, data, embeddings)


def alpha_grid(alpha_min: float, alpha_max: float, count: int, log: bool = False) -> np.ndarray:
    """Scales from ``alpha_min`` to ``alpha_max`` inclusive."""
    if count < 1:
        raise ParameterError("alpha grid needs at least one sample")
    if alpha_min < 0 or alpha_max < alpha_min:
        raise ParameterError(f"need 0 <= alpha_min <= alpha_max, got [{alpha_min}, {alpha_max}]")
    if log:
        if alpha_min <= 0:
            raise ParameterError("a logarithmic alpha grid needs alpha_min > 0")
        return np.geomspace(alpha_min, alpha_max, count)
    return np.linspace(alpha_min, alpha_max, count)


def run_metrics(data, embeddings, metrics="all", perplexity: float = 30.0, labels=None,
                precomputed: bool = False, header: bool = False) -> CommandResult:
    names = parse_metrics(metrics)
    doc = ReportDocument("metrics", {"metrics": list(names), "perplexity": perplexity})
    inputs = load_inputs(doc, data, embeddings, labels, precomputed, header)
    evaluator = Evaluator(inputs.d_hi, perplexity)
    status = EXIT_OK
    for label, y in inputs.embeddings.items():
        d_lo = pairwise_euclidean(y)
        reports = [evaluator.safe_report(m, d_lo) for m in names]
        if any(r.failed for r in reports):
            status = EXIT_METRIC_FAILURE
        doc.reports.append({"embedding": label, "metrics": [r.to_dict() for r in reports]})
    return CommandResult(doc, status)


def _curve(evaluator: Evaluator, metric: str, d_lo, alphas):
    extra = {}
    if metric == "NS":
        curve = stress.stress_scale_curve(evaluator.d_hi, d_lo, alphas)
        extra["optimal_alpha"] = stress.optimal_scale_alpha(evaluator.d_hi, d_lo)
    elif metric in ("KL", "KLG"):
        kernel = kl.KernelKind.STUDENT_T if metric == "KL" else kl.KernelKind.GAUSSIAN
        curve = kl.kl_scale_curve(evaluator.p, d_lo, alphas, kernel)
        if metric == "KL":
            extra["asymptote"] = kl.kl_asymptote(evaluator.p, d_lo)
    else:
        values, errors = [], {}
        for i, a in enumerate(alphas):
            r = evaluator.safe_report(metric, float(a) * d_lo)
            values.append(r.value)
            if r.failed:
                errors[i] = r.diagnostics["error"]
        return np.asarray(values), errors, extra
    return curve.values, dict(curve.errors), extra


def run_scale_curve(data, embeddings, metrics="NS,KL", alphas=None, perplexity: float = 30.0,
                    labels=None, precomputed: bool = False, header: bool = False) -> CommandResult:
    names = parse_metrics(metrics)
    alphas = alpha_grid(0.0, 10.0, 101) if alphas is None else np.asarray(alphas, float)
    doc = ReportDocument(
        "scale-curve",
        {"metrics": list(names), "perplexity": perplexity, "alphas": alphas},
    )
    inputs = load_inputs(doc, data, embeddings, labels, precomputed, header)
    evaluator = Evaluator(inputs.d_hi, perplexity)
    doc.curves = []
    result = CommandResult(doc)
    for label, y in inputs.embeddings.items():
        d_lo = pairwise_euclidean(y)
        for metric in names:
            try:
                values, errors, extra = _curve(evaluator, metric, d_lo, alphas)
            except MetricError as exc:
                values = np.full(alphas.size, np.nan)
                errors = {"all": f"{type(exc).__name__}: {exc}"}
                extra = {}
            if errors:
                result.status = EXIT_METRIC_FAILURE
            doc.curves.append(
                {"embedding": label, "metric": metric, "values": values,
                 "errors": {str(k): v for k, v in errors.items()}, **extra}
            )
            result.tables[f"{label}.{metric}"] = format_table(
                ["alpha", metric], zip(alphas.tolist(), values.tolist())
            )
    return result


def run_sensitivity(data, embedding=None, metrics="NS,SNS,NMS,SGS,FSNS", steps: int = 50,
                    base_sigma: float | None = None, growth: str = "linear",
                    rescale_low: float = 0.1, rescale_high: float = 10.0, seed: int = 0,
                    perplexity: float = 30.0, precomputed: bool = False,
                    header: bool = False, workers: int = 1) -> CommandResult:
    """Noise ladder starting from ``embedding`` (the data itself by default)."""
    names = parse_metrics(metrics)
    doc = ReportDocument("sensitivity", {"metrics": list(names), "seed": seed})
    inputs = load_inputs(
        doc, data, [embedding] if embedding else [], None, precomputed, header
    )
    if embedding:
        (y0,) = inputs.embeddings.values()
    elif inputs.data is not None:
        y0 = inputs.data
    else:
        raise ParameterError("precomputed distances need an --embedding to start the ladder")
    run = noise_ladder(
        y0, inputs.d_hi, names, steps=steps, base_sigma=base_sigma, growth=growth,
        rescale_low=rescale_low, rescale_high=rescale_high, seed=seed,
        perplexity=perplexity, workers=workers,
    )
    doc.parameters.update(run.parameters)
    correlations = metric_iteration_correlation(run)
    columns = ["step", "sigma", "factor", *names]
    rows = [
        [k, run.sigmas[k], run.factors[k], *run.values[k].tolist()] for k in range(run.steps)
    ]
    doc.ladder = {
        "columns": columns,
        "rows": rows,
        "correlations": correlations,
        "errors": {f"{k}:{m}": msg for (k, m), msg in sorted(run.errors.items())},
    }
    status = EXIT_METRIC_FAILURE if run.errors else EXIT_OK
    return CommandResult(doc, status, {"ladder": format_table(columns, rows)})


def run_rank(data, embeddings, metrics="NS,SNS", trials: int = 1, rescale_low: float = 1.0,
             rescale_high: float = 1.0, seed: int = 0, perplexity: float = 30.0,
             labels=None, precomputed: bool = False, header: bool = False) -> CommandResult:
    names = parse_metrics(metrics)
    doc = ReportDocument(
        "rank",
        {"metrics": list(names), "trials": trials, "rescale_low": rescale_low,
         "rescale_high": rescale_high, "seed": seed, "perplexity": perplexity},
    )
    inputs = load_inputs(doc, data, embeddings, labels, precomputed, header)
    if len(inputs.embeddings) < 2:
        raise ParameterError("rank needs at least 2 embeddings")
    evaluator = Evaluator(inputs.d_hi, perplexity)
    doc.ordering = {}
    result = CommandResult(doc)
    for metric in names:
        try:
            table = run_ordering_trials(
                inputs.d_hi, inputs.embeddings, metric, trials=trials,
                rescale_low=rescale_low, rescale_high=rescale_high, seed=seed,
                evaluator=evaluator,
            )
        except MetricError as exc:
            result.status = EXIT_METRIC_FAILURE
            doc.ordering[metric] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        doc.ordering[metric] = {
            "labels": table.labels,
            "scale_invariant": metric in SCALE_INVARIANT,
            "orderings": table.orderings,
            "pairwise": table.pairwise,
        }
        result.tables[f"{metric}.orderings"] = format_table(
            ["ordering", "percent"],
            (["<".join(k), v] for k, v in table.orderings.items()),
        )
    return result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drscale",
        description="Scale-aware quality metrics for dimensionality-reduction embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, embeddings="many", default_metrics="all"):
        p.add_argument("--data", required=True, help="input data (points, or distances with --precomputed)")
        if embeddings == "many":
            p.add_argument("--embedding", action="append", required=True,
                           help="embedding coordinates; repeat for several")
            p.add_argument("--label", action="append",
                           help="label for the matching --embedding (default: file stem)")
        else:
            p.add_argument("--embedding", help="starting embedding (default: the data itself)")
        p.add_argument("--precomputed", action="store_true",
                       help="--data holds condensed distances with an n=<N> preamble")
        p.add_argument("--header", action="store_true", help="skip a header line in matrix files")
        p.add_argument("--metrics", default=default_metrics,
                       help="comma-separated metric names, or 'all' (default: %(default)s)")
        p.add_argument("--perplexity", type=float, default=30.0,
                       help="perplexity of the input affinities (default: %(default)s)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = sub.add_parser("metrics", help="evaluate metrics for each embedding")
    common(p)

    p = sub.add_parser("scale-curve", help="metric values over a grid of scales")
    common(p, default_metrics="NS,KL")
    p.add_argument("--alpha-min", type=float, default=0.0)
    p.add_argument("--alpha-max", type=float, default=10.0)
    p.add_argument("--alpha-count", type=int, default=101)
    p.add_argument("--alpha-log", action="store_true", help="space the grid logarithmically")

    p = sub.add_parser("sensitivity", help="noise-ladder consistency experiment")
    common(p, embeddings="one", default_metrics="NS,SNS,NMS,SGS,FSNS")
    p.add_argument("--steps", type=int, default=50, help="ladder length including step 0")
    p.add_argument("--base-sigma", type=float,
                   help="noise scale (default: 0.25%% of the starting embedding's diameter)")
    p.add_argument("--growth", choices=sorted(GROWTH_SCHEDULES), default="linear")
    p.add_argument("--rescale-low", type=float, default=0.1)
    p.add_argument("--rescale-high", type=float, default=10.0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("rank", help="ordering frequencies over rescaled trials")
    common(p, default_metrics="NS,SNS")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--rescale-low", type=float, default=1.0)
    p.add_argument("--rescale-high", type=float, default=1.0)
    return parser


def _dispatch(args) -> CommandResult:
    shared = dict(perplexity=args.perplexity, precomputed=args.precomputed, header=args.header)
    if args.command == "metrics":
        return run_metrics(args.data, args.embedding, args.metrics, labels=args.label, **shared)
    if args.command == "scale-curve":
        alphas = alpha_grid(args.alpha_min, args.alpha_max, args.alpha_count, args.alpha_log)
        return run_scale_curve(args.data, args.embedding, args.metrics, alphas,
                               labels=args.label, **shared)
    if args.command == "sensitivity":
        return run_sensitivity(
            args.data, args.embedding, args.metrics, steps=args.steps,
            base_sigma=args.base_sigma, growth=args.growth, rescale_low=args.rescale_low,
            rescale_high=args.rescale_high, seed=args.seed, workers=args.workers, **shared,
        )
    return run_rank(
        args.data, args.embedding, args.metrics, trials=args.trials,
        rescale_low=args.rescale_low, rescale_high=args.rescale_high, seed=args.seed,
        labels=args.label, **shared,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = _dispatch(args)
        result.write(args.out)
    except (MetricError, OSError) as exc:
        print(f"drscale: error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    return result.status


if __name__ == "__main__":
    sys.exit(main())
