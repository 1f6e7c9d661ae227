import numpy as np
import pytest
from hypothesis import given, strategies as st

from fvo.curves import (CurveError, DeliveryCurve, Service, derivative, evaluate,
                        required_quantity)

DM = DeliveryCurve.default("DM")
CURVES = [DeliveryCurve.default(s) for s in Service]
deviations = st.floats(-1.0, 1.0, allow_nan=False)


@pytest.mark.parametrize("d, expected", [(0.0, 0.0), (-0.2, 1.0), (-0.1, 0.05), (-0.15, 0.525)])
def test_dm_evaluate(d, expected):
    assert evaluate(DM, d) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("d, expected", [(0.0, 0.0), (-0.15, -9.5), (-0.3, 0.0)])
def test_dm_derivative(d, expected):
    assert derivative(DM, d) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("d, expected", [(-0.2, 50.0), (0.0, 0.0), (-0.1, 2.5)])
def test_required_quantity(d, expected):
    assert required_quantity(DM, d, 50.0) == pytest.approx(expected, abs=1e-12)


def test_required_quantity_rejects_nonpositive_capacity():
    with pytest.raises(ValueError):
        required_quantity(DM, 0.0, 0.0)


def test_clamps_beyond_extreme_knots():
    for c in CURVES:
        assert evaluate(c, -5.0) == 1.0
        assert evaluate(c, 5.0) == -1.0


def test_knot_direction_hint():
    # -0.1 joins the knee segment (-9.5/Hz) and the sublinear one
    left = derivative(DM, -0.1)
    right = derivative(DM, -0.1, direction=1.0)
    assert left == pytest.approx(-9.5)
    assert right == pytest.approx(-0.05 / 0.085)
    assert derivative(DM, -0.1, direction=0.0) == left


def test_deadband_is_flat():
    for c in CURVES:
        for d in np.linspace(-0.0149, 0.0149, 7):
            assert evaluate(c, d) == 0.0
            assert derivative(c, d) == 0.0


def test_max_delivery_time_by_service():
    assert DeliveryCurve.default("DR").max_delivery_time == 10.0
    assert DeliveryCurve.default("DM").max_delivery_time == 1.0
    assert DeliveryCurve.default("DC").max_delivery_time == 1.0


@pytest.mark.parametrize("knots", [
    [(-0.2, 1.0), (-0.2, 0.0), (0.2, -1.0)],            # not increasing
    [(-0.2, 1.0), (-0.1, 0.0), (0.1, 0.5), (0.2, -1.0)],  # increasing fraction
    [(-0.2, 0.9), (0.2, -1.0)],                           # no full delivery
    [(-0.2, 1.0), (-0.1, 0.5), (0.2, -1.0)],              # h(0) != 0
])
def test_invalid_knots_rejected(knots):
    with pytest.raises(CurveError):
        DeliveryCurve.from_knots("DR", knots)


@given(deviations, deviations)
def test_monotone_non_increasing(d1, d2):
    lo, hi = min(d1, d2), max(d1, d2)
    for c in CURVES:
        assert evaluate(c, lo) >= evaluate(c, hi)


@given(deviations)
def test_slope_non_positive(d):
    for c in CURVES:
        assert derivative(c, d) <= 0.0
        assert derivative(c, d, direction=1.0) <= 0.0


@given(deviations)
def test_odd_symmetry(d):
    for c in CURVES:
        assert evaluate(c, -d) == pytest.approx(-evaluate(c, d), abs=1e-15)


@given(deviations)
def test_derivative_matches_central_difference(d):
    eps = 1e-6
    for c in CURVES:
        if any(abs(d - k) < 2 * eps for k in c.breakpoints):
            continue
        fd = (evaluate(c, d + eps) - evaluate(c, d - eps)) / (2 * eps)
        assert fd == pytest.approx(derivative(c, d), abs=1e-9 * max(1.0, abs(fd)) + 1e-8)
