import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from services.errors import InsufficientSamples
from services.regeneration import (
    bootstrap_replicates,
    estimate_direction,
    fit_regeneration_tail,
    within_joint_ci,
)


def test_geometric_tail_is_recovered():
    samples = np.random.default_rng(0).geometric(0.3, size=20000)
    fit = fit_regeneration_tail(samples, min_samples=1000, n_bootstrap=200, seed=1)
    assert fit.accepted
    assert fit.rate == pytest.approx(-math.log(0.7), abs=0.03)
    assert fit.prefactor == pytest.approx(1 / 0.7, rel=0.1)
    assert 0 < fit.rate_ci[0] < fit.rate_ci[1]
    assert fit.rate_stderr > 0
    assert fit.as_dict()["sample_size"] == 20000


def test_constant_samples_are_degenerate():
    fit = fit_regeneration_tail([1] * 2000, min_samples=1000)
    assert fit.degenerate
    assert not fit.accepted
    assert math.isnan(fit.rate)


def test_tail_fit_needs_enough_samples():
    with pytest.raises(InsufficientSamples):
        fit_regeneration_tail([1, 2, 3], min_samples=10)


def test_tail_fit_rejects_zero_durations():
    with pytest.raises(ValueError):
        fit_regeneration_tail([0, 1, 2], min_samples=1)


@pytest.mark.parametrize("method", ["bootstrap", "delta"])
def test_deterministic_direction(method):
    estimate = estimate_direction([2] * 200, [(1, 1)] * 200, q=0.5, method=method, n_bootstrap=100)
    assert estimate.theta_hat == pytest.approx(math.pi / 4)
    assert estimate.ci_halfwidth == pytest.approx(0.0, abs=1e-12)
    assert estimate.velocity == pytest.approx((0.5, 0.5))
    assert estimate.n_regenerations == 200


def test_direction_methods_agree():
    rng = np.random.default_rng(3)
    right = rng.random(5000) < 2 / 3
    increments = np.where(right[:, None], [1, 0], [0, 1])
    durations = np.ones(5000, dtype=int)
    truth = math.atan2(1, 2)
    boot = estimate_direction(durations, increments, method="bootstrap", n_bootstrap=500, seed=4)
    delta = estimate_direction(durations, increments, method="delta")
    assert abs(boot.theta_hat - truth) < 2 * boot.ci_halfwidth
    assert boot.theta_hat == delta.theta_hat
    assert delta.ci_halfwidth == pytest.approx(boot.ci_halfwidth, rel=0.3)


def test_direction_preconditions():
    with pytest.raises(InsufficientSamples):
        estimate_direction([1] * 5, [(1, 0)] * 5)
    with pytest.raises(ValueError):
        estimate_direction([1] * 200, [(1, 0)] * 199, min_samples=1)
    with pytest.raises(ValueError):
        estimate_direction([1] * 200, [(1, 0)] * 200, method="jackknife")


def test_bootstrap_replicates_are_reproducible():
    data = np.arange(50, dtype=float)
    a = bootstrap_replicates(50, lambda idx: data[idx].mean(), 20, seed=7)
    b = bootstrap_replicates(50, lambda idx: data[idx].mean(), 20, seed=7)
    assert np.array_equal(a, b)


def test_within_joint_ci():
    assert within_joint_ci(1.0, 0.3, 1.4, 0.4)
    assert not within_joint_ci(1.0, 0.3, 1.6, 0.4)
