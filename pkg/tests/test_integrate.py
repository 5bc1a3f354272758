import math

import numpy as np
import pytest

from charred.integrate import (
    IntegratorConfig,
    OutOfSpanError,
    integrate_adaptive,
    integrate_batch,
    integrate_fixed,
    solve_interval,
    solve_interval_regularized,
)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(h_min=1.0, h_max=0.5)
    with pytest.raises(ValueError):
        IntegratorConfig(u_max=-1)
    assert IntegratorConfig().tightened(0.1).rel_tol == pytest.approx(1e-10)


def test_exponential_growth_accuracy():
    tr = integrate_adaptive(lambda t, y: y, [1.0], 0.0, 2.0)
    assert tr.status == "completed"
    assert tr.final[0] == pytest.approx(math.exp(2.0), rel=1e-8)


def test_backward_integration():
    tr = integrate_adaptive(lambda t, y: -y, [1.0], 1.0, 0.0)
    assert tr.direction < 0
    assert tr.final[0] == pytest.approx(math.e, rel=1e-8)


def test_dense_output_between_steps():
    tr = integrate_adaptive(lambda t, y: np.array([y[1], -y[0]]), [0.0, 1.0], 0.0, 6.0)
    for t in np.linspace(0, 6, 37):
        assert tr.sample(t)[0] == pytest.approx(math.sin(t), abs=1e-7)


def test_sample_outside_span():
    tr = integrate_adaptive(lambda t, y: y, [1.0], 0.0, 1.0)
    with pytest.raises(OutOfSpanError):
        tr.sample(1.5)


def test_blowup_time_is_located():
    # y' = y^2, y(0) = 1 reaches u_max = 1e8 at t = 1 - 1e-8
    tr = integrate_adaptive(lambda t, y: y ** 2, [1.0], 0.0, 2.0)
    assert tr.status == "blowup"
    assert tr.t_event == pytest.approx(1 - 1e-8, abs=1e-8)


def test_custom_monitor():
    tr = integrate_adaptive(lambda t, y: np.ones(1), [0.0], 0.0, 5.0, monitor=lambda t, y: y[0] > 2.5)
    assert tr.status == "blowup"
    assert tr.t_event == pytest.approx(2.5, abs=1e-8)


def test_fixed_step_is_fifth_order():
    exact = math.exp(1.0)
    e1 = abs(integrate_fixed(lambda t, y: y, [1.0], 0, 1, 0.1)[0] - exact)
    e2 = abs(integrate_fixed(lambda t, y: y, [1.0], 0, 1, 0.05)[0] - exact)
    assert 20 < e1 / e2 < 45


def test_batch_stops_and_statuses():
    y0 = np.array([[0.5], [1.0], [-1.0]])
    r = integrate_batch(lambda t, y, rows: y ** 2, 0.0, y0, [0.5, 1.5, 3.0])
    assert list(r.status) == ["blowup", "blowup", "completed"]
    exact = lambda c, t: c / (1 - c * t)  # noqa: E731
    assert r.values[0, 0, 0] == pytest.approx(exact(0.5, 0.5), rel=1e-8)
    assert np.isnan(r.values[0, 2, 0])
    assert r.values[2, 2, 0] == pytest.approx(exact(-1.0, 3.0), rel=1e-8)
    assert r.t_event[0] == pytest.approx(2.0, abs=1e-7)
    assert r.t_event[1] == pytest.approx(1.0, abs=1e-7)
    assert np.isnan(r.t_event[2])


def test_batch_rows_are_independent():
    y0 = np.array([[1.0], [2.0]])
    both = integrate_batch(lambda t, y, rows: -y * (rows[:, None] + 1.0), 0.0, y0, [1.0]).values[:, 0, 0]
    assert both[0] == pytest.approx(math.exp(-1.0), rel=1e-8)
    assert both[1] == pytest.approx(2 * math.exp(-2.0), rel=1e-8)


def test_batch_backwards():
    r = integrate_batch(lambda t, y, rows: y, 1.0, np.array([[1.0]]), [0.5, 0.0])
    assert r.values[0, -1, 0] == pytest.approx(math.exp(-1.0), rel=1e-8)


def test_solve_interval_caps_singular_rows():
    y = solve_interval(lambda s, y, rows: y ** 2, np.array([0.5, 2.0, -1.0]), 0.0, 1.0, 1e-10, 1e-12,
                       y_cap=1e6)
    assert y[0] == pytest.approx(1.0, rel=1e-8)
    assert y[1] == np.inf
    assert y[2] == pytest.approx(-0.5, rel=1e-8)


def test_solve_interval_undefined_rows_are_nan():
    def f(s, y, rows):
        out = y.copy()
        out[y[:, 0] > 1.5] = np.nan
        return out
    y = solve_interval(f, np.array([1.0, 2.0]), 0.0, 0.2, 1e-10, 1e-12)
    assert y[0] == pytest.approx(math.exp(0.2), rel=1e-8)
    assert np.isnan(y[1])


def test_regularized_solver():
    y = solve_interval_regularized(lambda s, y, rows: y ** 2, np.array([0.5, 2.0, -3.0]),
                                   1e-10, 1e-12, y_cap=1e6)
    assert y[0] == pytest.approx(1.0, rel=1e-8)
    assert y[1] == np.inf
    assert y[2] == pytest.approx(-0.75, rel=1e-8)
