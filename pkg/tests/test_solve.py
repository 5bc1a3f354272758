import numpy as np
import pytest

import oracles
from charred.integrate import IntegratorConfig
from charred.problem import ClassOneSpec, GridSpec, InitialData, ProblemCase, builtin_example
from charred.solve import (
    BLOWUP,
    OK,
    OUT_OF_DOMAIN,
    estimate_blowup_time,
    solve_along_characteristic,
    solve_columns,
    solve_on_grid,
    solve_points,
    worker_count,
)


def _columns(fn, grid):
    return np.stack([fn(x, grid.t) for x in grid.x], axis=1)


def _max_err(grid, ref):
    m = grid.ok & np.isfinite(ref)
    assert m.sum() > 0
    return float(np.max(np.abs(grid.u[m] - ref[m])))


def test_grid_shape_and_metadata():
    case = builtin_example("E2")
    g = solve_on_grid(case, GridSpec(-1, 1, 0, 0.5, 7, 5))
    assert g.u.shape == (5, 7) and g.status.shape == (5, 7)
    assert g.metadata["problem"] == "E2" and g.metadata["rel_tol"] == 1e-9
    assert np.array_equal(g.u[0], np.linspace(-1, 1, 7) * 0)


def test_value_lookup():
    g = solve_on_grid(builtin_example("E2"), GridSpec(0, 1, 0, 0.5, 11, 11))
    assert g.value(0.5, 0.25) == g.u[5, 5]


@pytest.mark.parametrize("eid, fn, window, tol", [
    ("E4", oracles.e4_column, (-1, 1, 0, 0.5), 1e-8),
    ("E6", oracles.e6_column, (0.2, 0.9, 1, 1.5), 1e-8),
    ("E7", oracles.e7_column, (-1, 0.3, 1, 2), 1e-7),
])
def test_against_column_oracles(eid, fn, window, tol):
    grid = GridSpec(*window, 9, 9)
    g = solve_on_grid(builtin_example(eid), grid)
    assert _max_err(g, _columns(fn, grid)) <= tol


def test_against_closed_form_abel():
    grid = GridSpec(-1, 1, 0, 1, 21, 21)
    g = solve_on_grid(builtin_example("E5"), grid)
    X, T = np.meshgrid(grid.x, grid.t)
    assert _max_err(g, oracles.e5(X, T)) <= 1e-8


def test_blowup_columns_are_flagged():
    # E2 at x = 2 diverges near t = 0.29
    g = solve_on_grid(builtin_example("E2"), GridSpec(1.5, 2, 0, 0.5, 3, 51))
    col = g.status[:, -1]
    assert (col == BLOWUP).any() and col[0] == OK
    assert 0.28 < g.blowup_time[-1] < 0.30
    assert g.blowup_sign[-1] == 1
    assert np.all(np.isnan(g.u[g.status != OK]))


def test_out_of_domain_columns():
    # initial slope of E7 is complex for x > ln(2)/2
    g = solve_on_grid(builtin_example("E7"), GridSpec(0.2, 0.5, 1, 1.5, 4, 3))
    assert list(g.status[0]) == [OK, OK, OUT_OF_DOMAIN, OUT_OF_DOMAIN]


def test_backward_in_time():
    # the E2 relation holds on both sides of t0
    grid = GridSpec(-0.5, 0.5, -0.3, 0.3, 5, 7)
    g = solve_on_grid(builtin_example("E2"), grid)
    X, T = np.meshgrid(grid.x, grid.t)
    assert _max_err(g, oracles.e2(X, T)) <= 1e-9


def test_threads_do_not_change_results():
    case = builtin_example("E4")
    xs, ts = np.linspace(-1, 1, 130), np.linspace(0, 0.4, 5)
    a = solve_columns(case, xs, ts, threads=1)
    b = solve_columns(case, xs, ts, threads=4)
    assert np.array_equal(a[0], b[0], equal_nan=True)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("CHARRED_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("CHARRED_THREADS", "nonsense")
    assert worker_count() >= 1


def test_scattered_points():
    x = np.array([0.1, 0.5, 0.5, -0.3])
    t = np.array([0.2, 0.2, 0.4, 0.1])
    u, st = solve_points(builtin_example("E2"), x, t)
    assert list(st) == [OK] * 4
    assert np.allclose(u, oracles.e2(x, t), atol=1e-10)


def test_transport_limit():
    case = ProblemCase("T", 1, ClassOneSpec("1", "0", "0", "0"), InitialData(0, "0", "1"),
                       GridSpec(-1, 1, 0, 1, 11, 11))
    g = solve_on_grid(case)
    X, T = np.meshgrid(g.x, g.t)
    assert np.max(np.abs(g.u - T)) <= 1e-12


def test_along_characteristic_linear_speed():
    case = builtin_example("E1")
    sol = solve_along_characteristic(case, 0.4, 0.3, n=7)
    assert np.allclose(sol.x, 0.4 * np.exp(sol.t), rtol=1e-12)
    assert np.allclose(sol.u, oracles.e1(sol.x, sol.t), atol=1e-9)
    # k = u_t e^{B} = x + u^2 for E1
    assert np.allclose(sol.k, sol.x + sol.u ** 2, rtol=1e-9)
    s = sol.sample(0.15)
    assert s["status"] == OK and s["x"] == pytest.approx(0.4 * np.exp(0.15))
    assert s["u"] == pytest.approx(float(oracles.e1(s["x"], 0.15)), abs=1e-9)
    with pytest.raises(ValueError):
        sol.sample(1.0)


def test_along_characteristic_nonlinear_speed():
    case = ProblemCase("N", 1, ClassOneSpec("1 + x^2/10", "0", "0", "0"), InitialData(0, "0", "1"),
                       GridSpec(-1, 1, 0, 1))
    sol = solve_along_characteristic(case, 0.2, 1.0, n=5)
    assert np.allclose(sol.u, sol.t, atol=1e-10)
    assert sol.position(1.0) > 1.2


def test_k_is_a_function_of_u_on_a_characteristic():
    # E2: k = x0^2 e^u along the characteristic with foot x0
    sol = solve_along_characteristic(builtin_example("E2"), 0.7, 0.4, n=9)
    assert np.allclose(sol.k * np.exp(-sol.u), 0.49, rtol=1e-9)


def test_estimate_blowup_time():
    t = estimate_blowup_time(builtin_example("E2"), 2.0)
    assert t == pytest.approx(0.2900, abs=1e-3)
    assert estimate_blowup_time(builtin_example("E2"), 0.0, t_max=1.0) is None
    assert estimate_blowup_time(builtin_example("E2"), 2.0, t_max=0.0) is None


def test_tolerance_is_respected():
    case = builtin_example("E4")
    grid = GridSpec(-1, 1, 0, 0.5, 5, 5)
    ref = _columns(oracles.e4_column, grid)
    loose = solve_on_grid(case, grid, IntegratorConfig(rel_tol=1e-4, abs_tol=1e-6))
    tight = solve_on_grid(case, grid)
    assert _max_err(tight, ref) < 1e-9
    assert _max_err(loose, ref) < 1e-3


@pytest.mark.parametrize("eid", ["E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8"])
def test_every_example_satisfies_the_pde(eid):
    from charred.verify import fd_residual

    case = builtin_example(eid)
    g = solve_on_grid(case, case.verification_grid)
    rep = fd_residual(g, case)
    assert rep.max_abs <= 1e-3
    assert rep.count_evaluated >= 0.9 * (g.u.shape[0] - 2) * (g.u.shape[1] - 2)


@pytest.mark.parametrize("eid, window", [("E2", (0, 1, 0, 0.5)), ("E3", (-0.5, 1, 0, 0.5))])
def test_second_order_convergence(eid, window):
    from charred.verify import fd_residual

    case = builtin_example(eid)
    r = [fd_residual(solve_on_grid(case, GridSpec(*window, n, n)), case).max_abs for n in (51, 101)]
    assert 1.6 <= np.log2(r[0] / r[1]) <= 2.4
