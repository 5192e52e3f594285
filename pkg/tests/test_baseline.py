"""Tests for the full-rate cross-correlation baseline."""

import numpy as np
import pytest

from cstdoa.exceptions import DimensionError, NoPeakError
from cstdoa.services.baseline import best_lag_index, cross_correlate, tdoa_xcorr

T = 1 / 16000


def delayed(x, d):
    """x delayed by d whole samples, zero-filled."""
    out = np.zeros_like(x)
    if d >= 0:
        out[d:] = x[: len(x) - d]
    else:
        out[:d] = x[-d:]
    return out


def test_autocorrelation_peaks_at_zero(rng):
    x = rng.standard_normal(128)
    lags, r = cross_correlate(x, x, 20)
    assert lags[np.argmax(r)] == 0


@pytest.mark.parametrize("d", [-12, -1, 0, 3, 8, 15])
def test_delayed_copy_peaks_at_delay(broadband, d):
    x = broadband(256, seed=4)
    lags, r = cross_correlate(x, delayed(x, d), 20)
    assert lags[np.argmax(r)] == d


def test_matches_double_loop(rng):
    n = 64
    x1, x2 = rng.standard_normal((2, n))
    lags, r = cross_correlate(x1, x2, n - 1)
    for k, tau in enumerate(lags):
        expected = sum(x1[i] * x2[i + tau] for i in range(n) if 0 <= i + tau < n)
        assert r[k] == pytest.approx(expected, abs=1e-12)


def test_swapping_inputs_mirrors_lags(rng):
    x1, x2 = rng.standard_normal((2, 100))
    _, r12 = cross_correlate(x1, x2, 30)
    _, r21 = cross_correlate(x2, x1, 30)
    np.testing.assert_allclose(r12, r21[::-1], atol=1e-12)


def test_ties_go_to_smallest_lag():
    lags = np.array([-2, -1, 0, 1, 2])
    assert best_lag_index(lags, np.array([5.0, 1.0, 0.0, 1.0, 5.0])) == 0
    assert best_lag_index(lags, np.array([1.0, 5.0, 0.0, 5.0, 1.0])) == 1


def test_bad_shapes_raise():
    with pytest.raises(DimensionError):
        cross_correlate(np.zeros(10), np.zeros(11), 3)
    with pytest.raises(DimensionError):
        cross_correlate(np.zeros(10), np.zeros(10), 10)


def test_eight_sample_delay(broadband):
    x = broadband(512, seed=1)
    report = tdoa_xcorr(x, delayed(x, 8), T, refine=False)
    assert report.delay == pytest.approx(500e-6)
    assert report.method == "xcorr"
    assert report.confidence is None
    assert report.accepted


def test_refined_fractional_delay(broadband, shifted):
    x = broadband(1024, seed=2)
    report = tdoa_xcorr(x, shifted(x, 5.4), T, max_delay=20 * T)
    assert abs(report.delay / T - 5.4) < 0.25


def test_all_zero_block_has_no_peak(rng):
    with pytest.raises(NoPeakError):
        tdoa_xcorr(np.zeros(64), rng.standard_normal(64), T)


def test_periodic_signal_is_ambiguous():
    # 16-sample period: lags 0 and 16 correlate almost equally
    n = 1024
    x = np.sin(2 * np.pi * np.arange(n) / 16)
    lags, r = cross_correlate(x, delayed(x, 3), 40)
    peaks = lags[r > 0.9 * r.max()]
    assert 3 in peaks
    assert 3 + 16 in peaks or 3 - 16 in peaks
