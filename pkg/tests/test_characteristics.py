import math

import numpy as np
import pytest

from charred import expr as ex
from charred.characteristics import (
    CharacteristicError,
    DampingProfile,
    FootMap,
    SingularIntegrandError,
    damping_integral,
    trace_backward,
    trace_forward,
)

P = ex.parse


def test_constant_speed():
    c = trace_forward(P("1"), 0.5, 0.0, 2.0)
    assert c.x(2.0) == pytest.approx(2.5, abs=1e-10)
    assert c.samples[0] == (0.0, 0.5)


def test_linear_speed_is_exponential():
    c = trace_forward(P("x"), 0.3, 0.0, 1.5)
    for t in (0.25, 1.0, 1.5):
        assert c.x(t) == pytest.approx(0.3 * math.exp(t), rel=1e-8)


def test_backward_round_trip():
    a = P("sin(x) + t")
    x0 = trace_backward(a, 0.7, 1.2, 0.0)
    assert trace_forward(a, x0, 0.0, 1.2).x(1.2) == pytest.approx(0.7, abs=1e-8)


def test_trace_direction_checks():
    with pytest.raises(ValueError):
        trace_forward(P("1"), 0, 1.0, 0.0)
    with pytest.raises(ValueError):
        trace_backward(P("1"), 0, 0.0, 1.0)


def test_escaping_characteristic():
    # x' = x^2 from x = 1 leaves every bound before t = 1
    with pytest.raises(CharacteristicError):
        trace_forward(P("x^2"), 1.0, 0.0, 2.0)


@pytest.mark.parametrize("b, t0, t, expected", [
    ("1", 0.0, 0.7, 0.7),
    ("2*t", 0.0, 1.5, 2.25),
    ("1/t", 1.0, 2.0, math.log(2.0)),
    ("-1/t", 1.0, 3.0, -math.log(3.0)),
    ("cos(t)", 0.0, 1.0, math.sin(1.0)),
])
def test_damping_integral(b, t0, t, expected):
    assert damping_integral(P(b), t0, t) == pytest.approx(expected, rel=1e-9, abs=1e-12)
    prof = DampingProfile(P(b), t0, min(t0, t), max(t0, t))
    assert float(prof(t)) == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert float(prof(t0)) == 0.0


def test_damping_backwards_of_t0():
    prof = DampingProfile(P("cos(t)"), 1.0, 0.0, 2.0)
    ts = np.array([0.0, 0.5, 1.0, 2.0])
    assert np.allclose(prof(ts), np.sin(ts) - math.sin(1.0), atol=1e-9)
    assert np.allclose(prof.weight(ts), np.exp(np.sin(ts) - math.sin(1.0)), rtol=1e-9)


def test_singular_damping():
    with pytest.raises(SingularIntegrandError):
        DampingProfile(P("1/t"), 1.0, -1.0, 2.0)
    with pytest.raises(SingularIntegrandError):
        damping_integral(P("1/(t - 0.5)"), 0.0, 1.0)


def test_foot_map_linear_and_general_agree():
    xs = np.linspace(-1, 1, 9)
    ts = np.full_like(xs, 0.8)
    linear = FootMap(P("x"), 0.0)
    general = FootMap(P("x + 0*t"), 0.0)
    general.linear = None  # force the integrated path
    assert linear.linear is not None
    assert np.allclose(linear.feet(xs, ts), xs * math.exp(-0.8), rtol=1e-12)
    assert np.allclose(general.feet(xs, ts), xs * math.exp(-0.8), rtol=1e-9)


def test_foot_map_nonlinear_speed_matches_scalar_trace():
    a = P("1 + t*x/2")
    fm = FootMap(a, 0.0)
    x, t = np.array([0.2, -0.4]), np.array([1.0, 0.5])
    got = fm.feet(x, t)
    for i in range(2):
        assert got[i] == pytest.approx(trace_backward(a, x[i], t[i], 0.0), abs=1e-9)


def test_integral_along_characteristics():
    # a = x, alpha = x e^{-t}, b = 1: alpha e^B = x0 e^s along x = x0 e^s
    fm = FootMap(P("x"), 0.0)
    prof = DampingProfile(P("1"), 0.0, 0.0, 1.0)
    x, t = np.array([0.5, 2.0]), np.array([0.3, 1.0])
    x0, integral = fm.feet_and_integral(x, t, P("x*exp(-t)"), prof)
    assert np.allclose(integral, x0 * (np.exp(t) - 1), rtol=1e-12)
    # identical through the integrated route
    fm.linear = None
    x0b, integral_b = fm.feet_and_integral(x, t, P("x*exp(-t)"), prof)
    assert np.allclose(x0b, x0, rtol=1e-9) and np.allclose(integral_b, integral, rtol=1e-8)


def test_zero_alpha_shortcut():
    fm = FootMap(P("1"), 0.0)
    prof = DampingProfile(P("0"), 0.0, 0.0, 1.0)
    x0, integral = fm.feet_and_integral(np.array([1.0]), np.array([0.5]), P("0"), prof)
    assert x0[0] == 0.5 and integral[0] == 0.0
