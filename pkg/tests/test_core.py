import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modbilstm.core import (
    DomainError,
    action_to_cables,
    angle_error,
    bending_angle_deg,
    cable_drive,
    config_error,
    config_from_angle,
    config_from_bend,
    configs_from_bends,
    format_mean_std,
    mean_std,
    module_label,
    module_labels,
)

unit = st.floats(-1, 1, allow_nan=False)
bend = st.floats(-2.2, 2.2, allow_nan=False)


@pytest.mark.parametrize("i,n,expected", [(1, 4, -1.0), (2, 4, -1 / 3), (3, 6, -0.2), (1, 1, 0.0), (4, 4, 1.0)])
def test_module_label_examples(i, n, expected):
    assert module_label(i, n) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("i,n", [(0, 4), (5, 4), (1, 0)])
def test_module_label_range(i, n):
    with pytest.raises(DomainError):
        module_label(i, n)


@given(st.integers(2, 40))
def test_labels_monotone_symmetric(n):
    lab = module_labels(n)
    assert lab[0] == -1.0 and lab[-1] == 1.0
    assert np.all(np.diff(lab) > 0)
    np.testing.assert_allclose(lab, -lab[::-1], atol=1e-15)


@pytest.mark.parametrize("a,expected", [((0.5, -1.0), (0.5, 0, 0, 1.0)), ((0, 0), (0, 0, 0, 0)),
                                        ((-0.3, 0.7), (0, 0.3, 0.7, 0))])
def test_action_to_cables_examples(a, expected):
    assert action_to_cables(*a) == pytest.approx(expected)


@given(unit, unit)
def test_cables_round_trip_and_exclusive(a0, a1):
    c = action_to_cables(a0, a1)
    assert c[0] * c[1] == 0 and c[2] * c[3] == 0
    assert (c[0] - c[1], c[2] - c[3]) == (a0, a1)
    assert np.array_equal(cable_drive(np.array([a0, a1])), np.array([a0, a1]))


@pytest.mark.parametrize("b,expected", [((0, 0), (0, 0, 1)), ((0.3, 0), (0.295520, 0, 0.955336)),
                                        ((0, -0.5), (0, -0.479426, 0.877583))])
def test_config_from_bend_examples(b, expected):
    np.testing.assert_allclose(config_from_bend(*b), expected, atol=1e-6)


def test_config_from_bend_rejects_pi():
    with pytest.raises(DomainError):
        config_from_bend(math.pi, 0.0)
    with pytest.raises(DomainError):
        config_from_bend(3.0, 1.0)


@given(bend, bend)
def test_config_unit_norm(tx, ty):
    v = config_from_bend(tx, ty)
    assert abs(np.linalg.norm(v) - 1) < 1e-9
    assert np.all(np.abs(v) <= 1)
    if (tx, ty) != (0.0, 0.0) and math.hypot(tx, ty) > 1e-7:
        assert v[2] < 1
    np.testing.assert_allclose(configs_from_bends(np.array([[tx, ty]]))[0], v, atol=1e-15)


def test_config_from_angle():
    np.testing.assert_allclose(config_from_angle(math.pi / 2), [1, 0], atol=1e-15)
    assert bending_angle_deg(config_from_angle(math.radians(-30))) == pytest.approx(-30)


@pytest.mark.parametrize("vd,v,expected", [((0, 0, 1), (0, 0, 1), 0.0), ((0, 0, 1), (0, 0.1, 0.994987), 10.013),
                                           ((1, 0, 0), (-1, 0, 0), 200.0)])
def test_config_error_examples(vd, v, expected):
    assert config_error(vd, v) == pytest.approx(expected, abs=1e-3)


def test_config_error_shape_mismatch():
    with pytest.raises(DomainError):
        config_error((0, 0, 1), (0, 1))


@given(bend, bend, bend, bend, bend, bend)
def test_config_error_metric(a, b, c, d, e, f):
    u, v, w = config_from_bend(a, b), config_from_bend(c, d), config_from_bend(e, f)
    assert config_error(u, v) == config_error(v, u)
    assert config_error(u, u) == 0
    assert config_error(u, w) <= config_error(u, v) + config_error(v, w) + 1e-9


@pytest.mark.parametrize("d,a,expected", [(45, 45, 0), (90, 85.74, 4.26), (-39.6, -41.58, 1.98)])
def test_angle_error_examples(d, a, expected):
    assert angle_error(d, a) == pytest.approx(expected, abs=1e-9)


def test_mean_std_format():
    m, s = mean_std([1.0, 3.0])
    assert (m, s) == (2.0, 1.0)
    assert format_mean_std(3.954, 1.836) == "3.95 ± 1.84%"
