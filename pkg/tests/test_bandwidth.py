import numpy as np
import pytest

from mmdgen.bandwidth import (
    BASELINE_BANDWIDTHS,
    BandwidthPolicy,
    DegenerateDataError,
    PatienceSchedule,
    learning_rate,
    pairwise_distance_quantiles,
    patience,
    prob_vector,
    type1_quantile,
)
from mmdgen.rng import substream


def _quantile_oracle(values, p):
    # Smallest order statistic whose empirical CDF reaches p.
    s = np.sort(values)
    n = s.size
    for i, v in enumerate(s, start=1):
        if i / n >= p - 1e-15:
            return v
    return s[-1]


def test_prob_vector_formula_and_monotonicity():
    p = prob_vector(6)
    k = np.arange(1, 7)
    np.testing.assert_allclose(p, 0.95 * 2.0 ** (-9.0 * (k - 1) / 6.0), rtol=1e-15)
    assert np.all(np.diff(p) < 0)
    np.testing.assert_allclose(prob_vector(1), [0.95], rtol=0)


def test_prob_vector_rejects_zero_count():
    with pytest.raises(ValueError):
        prob_vector(0)


def test_type1_quantile_against_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(25):
        vals = np.sort(rng.random(int(rng.integers(1, 30))))
        for p in rng.uniform(0.01, 1.0, size=8):
            assert type1_quantile(vals, p) == _quantile_oracle(vals, p)
    # Exact grid points: p = i/n must return the i-th order statistic.
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(type1_quantile(vals, [0.25, 0.5, 0.75, 1.0]), vals)


def test_type1_quantile_rejects_bad_probs():
    with pytest.raises(ValueError):
        type1_quantile(np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        type1_quantile(np.array([1.0]), 1.5)


def test_pairwise_distance_quantiles_small_sample():
    # Three points with pairwise distances {1, 1, sqrt(2)}.
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    h = pairwise_distance_quantiles(X, [1 / 3, 2 / 3, 1.0])
    np.testing.assert_allclose(h, [1.0, 1.0, np.sqrt(2.0)], rtol=1e-15)


def test_pairwise_distance_quantiles_subsampling():
    rng = np.random.default_rng(1)
    X = rng.random((120, 3))
    full = pairwise_distance_quantiles(X, [0.5], cap=200)
    sub1 = pairwise_distance_quantiles(X, [0.5], cap=50, rng=substream(9, "subsample", 0))
    sub2 = pairwise_distance_quantiles(X, [0.5], cap=50, rng=substream(9, "subsample", 0))
    np.testing.assert_array_equal(sub1, sub2)
    # Subsampled estimate stays in the right neighborhood.
    assert abs(sub1[0] - full[0]) < 0.2
    with pytest.raises(ValueError):
        pairwise_distance_quantiles(X, [0.5], cap=50)  # rng required above the cap


def test_pairwise_distance_quantiles_degenerate_inputs():
    X = np.ones((5, 2))
    with pytest.raises(DegenerateDataError):
        pairwise_distance_quantiles(X, [0.5])
    # Mostly-duplicated rows: small probabilities land on distance 0.
    X = np.vstack([np.zeros((9, 2)), np.ones((1, 2))])
    with pytest.raises(DegenerateDataError):
        pairwise_distance_quantiles(X, [0.05])


def test_policy_validation_and_bank():
    with pytest.raises(ValueError):
        BandwidthPolicy(kernel_counts=(6, 6))
    with pytest.raises(ValueError):
        BandwidthPolicy(kernel_counts=())
    pol = BandwidthPolicy(kernel_counts=(3, 6))
    X = np.random.default_rng(2).random((40, 2))
    bank = pol.bank_for(X, 3)
    assert len(bank) == 3
    assert all(h > 0 for h in bank.bandwidths)
    # probs() follows the shared formula.
    np.testing.assert_allclose(pol.probs(3), prob_vector(3), rtol=0)


def test_patience_piecewise_values():
    want = {1: 20, 20: 20, 21: 20, 60: 35, 100: 50, 101: 50, 500: 50}
    for t, p in want.items():
        assert patience(t) == p
    with pytest.raises(ValueError):
        patience(0)
    # Custom schedule parameters feed through.
    assert PatienceSchedule(floor=5, cap=9, slope=1.0, offset=5)(8) == 8


def test_learning_rate_decay():
    assert learning_rate(0) == 0.001
    np.testing.assert_allclose(learning_rate(1), 2e-4, rtol=1e-15)
    np.testing.assert_allclose(learning_rate(2), 4e-5, rtol=1e-15)
    np.testing.assert_allclose(learning_rate(3, base=0.01), 0.01 / 125, rtol=1e-15)
    with pytest.raises(ValueError):
        learning_rate(-1)


def test_baseline_bank_constants():
    assert BASELINE_BANDWIDTHS == (0.001, 0.01, 0.15, 0.25, 0.50, 0.75)
