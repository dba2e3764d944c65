import sys

import numpy as np
import pytest

from drscale.kl import calibrate_perplexity, joint_p
from drscale.matrix import PairAffinities, max_normalize, n_points_from_length, pairwise_euclidean

# Three-point instance with a known asymptote of zero.
THREE_POINT_P = np.array([[0.0, 0.2, 0.1], [0.2, 0.0, 0.2], [0.1, 0.2, 0.0]])
THREE_POINT_Y = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def random_instance(rng, n, dim_hi=5, dim_lo=2, noise=0.3):
    """Input distances and distances of a noisy 2-D projection of the data."""
    x = rng.normal(size=(n, dim_hi))
    y = x[:, :dim_lo] + noise * rng.normal(size=(n, dim_lo))
    return pairwise_euclidean(x), pairwise_euclidean(y)


def small_perplexity(n):
    return min(30.0, (n - 1) / 3.0)


def affinities_for(d_hi, perplexity=None):
    n = n_points_from_length(len(d_hi))
    perp = small_perplexity(n) if perplexity is None else perplexity
    return joint_p(calibrate_perplexity(max_normalize(d_hi), perp))


def grid_isotonic_sse(y, step=1e-3):
    """Smallest squared error of a non-decreasing fit whose values lie on a grid.

    Dynamic programming over grid levels: the best cost of a prefix ending
    at level g is the residual there plus the best prefix cost at any level
    <= g.  Independent of the pooling logic in PAVA.
    """
    y = np.asarray(y, dtype=float)
    levels = np.arange(y.min() - step, y.max() + 2 * step, step)
    best = np.zeros(levels.size)
    for value in y:
        best = np.minimum.accumulate(best) + (value - levels) ** 2
    return best.min()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def three_point_p():
    return PairAffinities.from_matrix(THREE_POINT_P)


@pytest.fixture
def three_point_d_lo():
    return pairwise_euclidean(THREE_POINT_Y)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
