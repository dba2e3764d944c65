import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from drscale.errors import InputValidationError, ParameterError
from drscale.evaluate import METRICS, SCALE_INVARIANT, Evaluator, parse_metrics
from drscale.experiments import (
    LadderRun,
    metric_iteration_correlation,
    metric_score_correlations,
    noise_ladder,
    ordering_frequencies,
    random_embedding,
    rank_embeddings,
    reference_embeddings,
    run_ordering_trials,
    structured_dataset,
)
from drscale.matrix import pairwise_euclidean
from drscale.stress import normalized_stress

STRESS_INVARIANT = ["SNS", "NMS", "SGS", "FSNS"]


@pytest.fixture(scope="module")
def data():
    return structured_dataset(80, seed=3)


@pytest.fixture(scope="module")
def d_hi(data):
    return pairwise_euclidean(data)


def fake_run(columns):
    names = tuple(columns)
    values = np.column_stack([np.asarray(v, float) for v in columns.values()])
    steps = values.shape[0]
    return LadderRun(names, 0, np.zeros(steps), np.ones(steps), values)


class TestEvaluator:
    def test_parse(self):
        assert parse_metrics("ns, sns") == ("NS", "SNS")
        assert parse_metrics("all") == METRICS
        assert parse_metrics(["KL", "KL"]) == ("KL",)

    @pytest.mark.parametrize("bad", ["NS,XYZ", "", []])
    def test_parse_rejects(self, bad):
        with pytest.raises(ParameterError):
            parse_metrics(bad)

    def test_self_embedding(self, data, d_hi):
        ev = Evaluator(d_hi)
        assert ev.value("NS", d_hi) == 0.0
        assert ev.value("SNS", d_hi) == pytest.approx(0.0, abs=1e-12)
        assert ev.value("NMS", d_hi) == 0.0
        assert ev.value("SGS", d_hi) == 1.0
        assert ev.score("SGS", d_hi) == -1.0

    def test_every_metric_evaluates(self, data, d_hi, rng):
        ev = Evaluator(d_hi, perplexity=15)
        d_lo = pairwise_euclidean(data + 0.2 * rng.normal(size=data.shape))
        for metric in METRICS:
            report = ev.report(metric, d_lo)
            assert np.isfinite(report.value) and not report.failed

    def test_invariant_set(self, data, d_hi, rng):
        ev = Evaluator(d_hi, perplexity=15)
        d_lo = pairwise_euclidean(data + 0.2 * rng.normal(size=data.shape))
        for metric in METRICS:
            a, b = ev.value(metric, d_lo), ev.value(metric, 10 * d_lo)
            if metric in SCALE_INVARIANT:
                assert b == pytest.approx(a, rel=1e-6)
            else:
                assert abs(b - a) > 1e-3 * abs(a)

    def test_safe_report_records_failure(self, d_hi):
        report = Evaluator(d_hi).safe_report("SNS", np.zeros_like(d_hi))
        assert report.failed and np.isnan(report.value)
        assert "DegenerateInputError" in report.diagnostics["error"]


class TestRandomEmbedding:
    def test_unit_square(self):
        y = random_embedding(200, 2, seed=1)
        assert y.shape == (200, 2)
        assert y.min() >= 0.0 and y.max() <= 1.0

    def test_seeded(self):
        assert_array_equal(random_embedding(10, 3, seed=4), random_embedding(10, 3, seed=4))
        assert not np.array_equal(random_embedding(10, 3, seed=4), random_embedding(10, 3, seed=5))

    def test_bad_size(self):
        with pytest.raises(ParameterError):
            random_embedding(1, 2)


class TestNoiseLadder:
    def test_shape_and_bounds(self, data, d_hi):
        run = noise_ladder(data, d_hi, "NS,SNS", steps=12, seed=1)
        assert run.steps == 12 and run.values.shape == (12, 2)
        assert run.sigmas[0] == 0.0
        assert np.all(np.diff(run.sigmas) > 0)
        assert np.all((run.factors >= 0.1) & (run.factors <= 10))

    def test_zero_noise(self, data, d_hi):
        run = noise_ladder(data, d_hi, "NS,SNS,NMS,SGS,FSNS", steps=10, base_sigma=0.0, seed=2)
        corr = metric_iteration_correlation(run)
        for metric in STRESS_INVARIANT:
            column = run.column(metric)
            assert_allclose(column, column[0], rtol=1e-9, atol=1e-12)
            assert corr[metric] is None
        assert np.ptp(run.column("NS")) > 0.1
        assert corr["NS"] is not None

    def test_rescale_disabled(self, data, d_hi):
        run = noise_ladder(data, d_hi, "NS", steps=8, rescale_low=1, rescale_high=1, seed=3)
        assert_array_equal(run.factors, 1.0)
        again = noise_ladder(data, d_hi, "NS", steps=8, rescale_low=1, rescale_high=1, seed=3)
        assert_array_equal(run.values, again.values)
        assert run.column("NS")[0] == 0.0

    def test_rescale_cancels_for_invariant_metrics(self, data, d_hi):
        names = ",".join(STRESS_INVARIANT + ["SNKL", "FSKL", "KLINF"])
        ev = Evaluator(d_hi, perplexity=15)
        scaled = noise_ladder(data, d_hi, names, steps=6, seed=4, evaluator=ev)
        plain = noise_ladder(data, d_hi, names, steps=6, seed=4, evaluator=ev,
                             rescale_low=1, rescale_high=1)
        assert_allclose(scaled.values, plain.values, rtol=1e-9, atol=1e-12)

    def test_reproducible_and_parallel_safe(self, data, d_hi):
        a = noise_ladder(data, d_hi, "NS,SNS,SGS", steps=10, seed=9)
        b = noise_ladder(data, d_hi, "NS,SNS,SGS", steps=10, seed=9, workers=4)
        assert_array_equal(a.values, b.values)
        assert_array_equal(a.factors, b.factors)
        c = noise_ladder(data, d_hi, "NS,SNS,SGS", steps=10, seed=10)
        assert not np.array_equal(a.values, c.values)

    def test_noise_matches_manual_recomputation(self, data, d_hi):
        run = noise_ladder(data, d_hi, "NS", steps=5, seed=5, rescale_low=1, rescale_high=1)
        ns_sequence = run.column("NS")
        assert np.all(np.diff(ns_sequence) != 0)
        assert ns_sequence[0] == normalized_stress(d_hi, d_hi)

    def test_metric_errors_recorded(self, rng):
        x = rng.normal(size=(6, 2))
        run = noise_ladder(x, pairwise_euclidean(x), "NS,KL", steps=4, perplexity=30)
        assert np.all(np.isnan(run.column("KL")))
        assert np.all(np.isfinite(run.column("NS")))
        assert len(run.errors) == 4 and all(m == "KL" for _, m in run.errors)

    def test_parameter_errors(self, data, d_hi):
        with pytest.raises(ParameterError):
            noise_ladder(data, d_hi, "NS,BOGUS")
        with pytest.raises(ParameterError):
            noise_ladder(data, d_hi, "NS", steps=0)
        with pytest.raises(ParameterError):
            noise_ladder(data, d_hi, "NS", rescale_low=0)
        with pytest.raises(ParameterError):
            noise_ladder(data, d_hi, "NS", base_sigma=-1)
        with pytest.raises(InputValidationError):
            noise_ladder(data[:-1], d_hi, "NS")

    def test_default_schedule_sns_increases(self):
        increases = pairs = 0
        for seed in range(5):
            x = structured_dataset(300, seed=seed)
            run = noise_ladder(x, pairwise_euclidean(x), "SNS", steps=50, seed=seed)
            increases += int(np.sum(np.diff(run.column("SNS")) > 0))
            pairs += run.steps - 1
        assert increases / pairs >= 0.9

    def test_two_percent_schedule_sns_increases(self):
        # linear growth with a base of 2% of the diameter, as stated for the
        # default schedule; accumulated noise saturates within ~10 steps
        increases = pairs = 0
        for seed in range(5):
            x = structured_dataset(300, seed=seed)
            d = pairwise_euclidean(x)
            run = noise_ladder(x, d, "SNS", steps=50, seed=seed, base_sigma=0.02 * d.max())
            increases += int(np.sum(np.diff(run.column("SNS")) > 0))
            pairs += run.steps - 1
        assert increases / pairs >= 0.9


class TestIterationCorrelation:
    def test_increasing(self):
        corr = metric_iteration_correlation(fake_run({"NS": np.arange(10.0) ** 2}))
        assert corr["NS"] > 0.9
        corr = metric_iteration_correlation(fake_run({"NS": np.arange(10.0)}))
        assert corr["NS"] == pytest.approx(1.0)

    def test_constant_is_undefined(self):
        assert metric_iteration_correlation(fake_run({"SNS": np.full(10, 0.3)}))["SNS"] is None

    def test_sgs_negated(self):
        corr = metric_iteration_correlation(fake_run({"SGS": 1.0 - 0.01 * np.arange(10)}))
        assert corr["SGS"] == pytest.approx(1.0)

    def test_too_few_valid_steps(self):
        run = fake_run({"NS": [1.0, np.nan, np.nan, 2.0]})
        assert metric_iteration_correlation(run)["NS"] is None

    def test_structured_sns(self):
        x = structured_dataset(300, seed=0)
        run = noise_ladder(x, pairwise_euclidean(x), "SNS", steps=50, seed=0)
        assert metric_iteration_correlation(run)["SNS"] >= 0.9


class TestRanking:
    def test_perfect_first(self, data, d_hi):
        embs = {"random": random_embedding(80, 2, seed=1), "perfect": data}
        ranking = rank_embeddings(d_hi, embs, "SNS")
        assert ranking.labels == ("perfect", "random")

    def test_sns_invariant_to_rescaling(self, data, d_hi, rng):
        refs = reference_embeddings(data, seed=2)
        ev = Evaluator(d_hi)
        base = rank_embeddings(d_hi, refs, "SNS", evaluator=ev).labels
        for _ in range(10):
            scaled = {k: v * 10 ** rng.uniform(-3, 3) for k, v in refs.items()}
            assert rank_embeddings(d_hi, scaled, "SNS", evaluator=ev).labels == base

    def test_ns_flips_under_tenfold(self, data, d_hi):
        embs = {"reference": data, "random": random_embedding(80, 2, seed=1)}
        assert rank_embeddings(d_hi, embs, "NS").labels == ("reference", "random")
        bigger = {"reference": 10 * data, "random": embs["random"]}
        assert rank_embeddings(d_hi, bigger, "NS").labels == ("random", "reference")
        assert rank_embeddings(d_hi, bigger, "SNS").labels == ("reference", "random")

    def test_ties_reported(self, data, d_hi):
        ranking = rank_embeddings(d_hi, {"b": data, "a": data.copy()}, "NMS")
        assert ranking.labels == ("b", "a")
        assert ranking.ties == (("b", "a"),)

    def test_errors(self, data, d_hi):
        with pytest.raises(ParameterError):
            rank_embeddings(d_hi, {"only": data}, "SNS")
        with pytest.raises(InputValidationError):
            rank_embeddings(d_hi, {"a": data, "b": data[:10]}, "SNS")


class TestOrderingFrequencies:
    def test_identical_trials(self):
        table = ordering_frequencies([{"a": 1.0, "b": 2.0, "c": 3.0}] * 7)
        assert table.percent("a", "b", "c") == 100.0
        assert sum(table.orderings.values()) == pytest.approx(100.0)
        assert sum(v == 0 for v in table.orderings.values()) == 5

    def test_coin_flip(self, rng):
        trials = [{"a": x, "b": 1 - x} for x in rng.uniform(size=4000)]
        table = ordering_frequencies(trials)
        assert table.pairwise[("a", "b")] == pytest.approx(50.0, abs=3.0)
        assert sum(table.orderings.values()) == pytest.approx(100.0, abs=0.01)

    def test_higher_is_better(self):
        table = ordering_frequencies([{"a": 0.9, "b": 0.1}], higher_is_better=True)
        assert table.percent("a", "b") == 100.0

    def test_missing_label(self):
        with pytest.raises(InputValidationError):
            ordering_frequencies([{"a": 1.0, "b": 2.0}, {"a": 1.0}])

    def test_expected_order_under_snkl(self):
        data = structured_dataset(100, seed=11)
        d = pairwise_euclidean(data)
        runs = {"tsne": [], "mds": [], "rnd": []}
        for seed in range(20):
            refs = reference_embeddings(data, seed=seed, noise=0.05)
            runs["tsne"].append(data + 0.01 * np.random.default_rng(seed).normal(size=data.shape))
            runs["mds"].append(refs["noisy"])
            runs["rnd"].append(refs["random"])
        table = run_ordering_trials(d, runs, "SNKL", trials=20, rescale_low=1e-2,
                                    rescale_high=1e2, seed=1)
        assert table.percent("tsne", "mds", "rnd") >= 95.0

    def test_sns_table_unchanged_by_rescaling(self, data, d_hi):
        refs = reference_embeddings(data, seed=5)
        fixed = run_ordering_trials(d_hi, refs, "SNS", trials=10)
        varied = run_ordering_trials(d_hi, refs, "SNS", trials=10, rescale_low=1e-2,
                                     rescale_high=1e2, seed=3)
        assert fixed.orderings == varied.orderings

    def test_ns_table_changes_by_rescaling(self, data, d_hi):
        refs = reference_embeddings(data, seed=5)
        fixed = run_ordering_trials(d_hi, refs, "NS", trials=30)
        varied = run_ordering_trials(d_hi, refs, "NS", trials=30, rescale_low=1e-2,
                                     rescale_high=1e2, seed=3)
        assert fixed.orderings != varied.orderings


def test_metric_score_correlations():
    scores = {"NS": [1, 2, 3, 4], "SNS": [2, 3, 5, 9], "SGS": [4, 3, 2, 1], "flat": [1, 1, 1, 1]}
    corr = metric_score_correlations(scores)
    assert corr[("NS", "SNS")] == pytest.approx(1.0)
    assert corr[("NS", "SGS")] == pytest.approx(-1.0)
    assert corr[("NS", "flat")] is None
