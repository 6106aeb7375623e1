import math
import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from services.cone import (
    ALPHA_MAX,
    alpha_from_means,
    cone_from_alpha,
    estimate_alpha,
    theta_curve,
)
from services.errors import SubcriticalSuspected
from services.lattice import Window


def test_cone_algebra_at_zero_drift():
    cone = cone_from_alpha(0.7, 0.0, 0.01)
    assert cone.M == (0.5, 0.5)
    assert cone.theta_minus == pytest.approx(math.pi / 4)
    assert cone.theta_plus == pytest.approx(math.pi / 4)
    assert cone.ci["theta_minus"] == pytest.approx(0.01 / math.sqrt(2) / 0.5)


def test_cone_algebra_at_full_drift():
    cone = cone_from_alpha(1.0, ALPHA_MAX)
    assert cone.M == pytest.approx((1.0, 0.0))
    assert cone.N == pytest.approx((0.0, 1.0))
    assert cone.theta_minus == pytest.approx(0.0)
    assert cone.theta_plus == pytest.approx(math.pi / 2)
    assert sum(cone.M) == pytest.approx(1.0)


def test_alpha_out_of_range():
    with pytest.raises(ValueError):
        cone_from_alpha(0.7, 0.8)
    with pytest.raises(ValueError):
        cone_from_alpha(0.7, -0.1)


def test_alpha_from_means():
    assert alpha_from_means((2.0, 0.0)) == pytest.approx(ALPHA_MAX)
    assert alpha_from_means((1.0, 1.0)) == 0.0


def test_estimate_alpha_on_open_lattice():
    cone = estimate_alpha(
        1.0, replicas=3, window=Window.from_origin(80, 80), seed=3,
        escape_margin=4, workers=1, n_bootstrap=50, min_samples=10,
    )
    assert cone.alpha_hat == pytest.approx(ALPHA_MAX)
    assert cone.theta_minus == pytest.approx(0.0)
    assert cone.ci["alpha"] == pytest.approx(0.0)
    assert cone.escape_rate == 1.0
    assert cone.n_regenerations == 3 * 74


def test_theta_curve_on_open_lattice():
    curve = theta_curve(
        1.0, [0.0, 0.5, 1.0], replicas=3, window=Window.from_origin(60, 60), seed=1,
        escape_margin=4, workers=1, n_bootstrap=50, min_samples=10,
    )
    assert curve.monotone
    assert curve.estimates[0].theta_hat == pytest.approx(math.pi / 2)
    assert curve.estimates[-1].theta_hat == pytest.approx(0.0)
    assert 0.0 < curve.estimates[1].theta_hat < math.pi / 2
    assert curve.mean_T1 == [1.0, 1.0, 1.0]
    assert curve.skipped == 0
    assert len(curve.replica_angles) == 3
    assert curve.as_dict()["monotone"] is True


def test_theta_curve_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        theta_curve(1.0, [0.5, 0.0], replicas=1, window=Window.from_origin(20, 20), seed=0)


def test_subcritical_density_is_reported():
    with pytest.raises(SubcriticalSuspected):
        estimate_alpha(
            0.1, replicas=5, window=Window.from_origin(60, 60), seed=0,
            escape_margin=4, workers=1, min_samples=1,
        )
