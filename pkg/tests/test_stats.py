import numpy as np
import pytest

from metrolangevin.stats import RunningMoments, loglog_fit


def test_merge_equals_whole():
    x = np.random.default_rng(1).normal(size=(1000, 3)) * [1, 10, 100] + 5
    whole = RunningMoments.from_samples(x)
    parts = RunningMoments.empty((3,))
    for a in range(0, 1000, 137):
        parts = parts.merge(RunningMoments.from_samples(x[a:a + 137]))
    assert parts.count == 1000
    np.testing.assert_allclose(parts.mean, whole.mean, rtol=1e-12)
    np.testing.assert_allclose(parts.m2, whole.m2, rtol=1e-10)
    np.testing.assert_allclose(whole.variance, x.var(axis=0, ddof=1), rtol=1e-12)
    np.testing.assert_allclose(whole.std_error, x.std(axis=0, ddof=1) / np.sqrt(1000), rtol=1e-12)


def test_small_counts():
    m = RunningMoments.from_samples([3.0])
    assert m.variance == 0 and m.std_error == 0
    assert RunningMoments.empty().merge(m).mean == 3.0


def test_loglog_fit_exact_power():
    x = np.array([0.04, 0.02, 0.01, 0.005])
    s, c = loglog_fit(x, 3.0 * x**1.5)
    assert s == pytest.approx(1.5, abs=1e-12)
    assert c == pytest.approx(np.log(3.0), abs=1e-11)
    assert np.isnan(loglog_fit(x, [1, 0, 1, 1])[0])
