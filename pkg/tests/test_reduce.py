import math

import numpy as np
import pytest

from charred.integrate import IntegratorConfig, integrate_adaptive
from charred.problem import ClassOneSpec, ClassTwoSpec, GridSpec, InitialData, ProblemCase, builtin_example
from charred.reduce import (
    NoRealBranchError,
    ReducedEquation,
    ReductionError,
    branch_of,
    build_class_one_system,
    build_class_two_system,
    classify_reduced,
    cubic_roots,
    describe,
    format_reduction,
    real_root_K,
)


def _case(cls, spec, initial, grid=(0, 1, 0, 1)):
    return ProblemCase("t", cls, spec, initial, GridSpec(*grid))


# -- classification

@pytest.mark.parametrize("eid, kind", [
    ("E1", "riccati"), ("E2", "separable"), ("E3", "separable"),
    ("E4", "riccati"), ("E5", "abel"),
])
def test_example_classes(eid, kind):
    assert classify_reduced(builtin_example(eid)).kind == kind


@pytest.mark.parametrize("n", [1, 2, 3])
def test_power_law_G_degree(n):
    c = _case(1, ClassOneSpec("x", "1", "0", f"u^{n}"), InitialData(0, "1", "1"))
    assert classify_reduced(c).degree == n + 1


def test_other_classes():
    lin = _case(1, ClassOneSpec("1", "0", "0", "3"), InitialData(0, "0", "1"))
    assert classify_reduced(lin).kind == "linear"
    gen = _case(1, ClassOneSpec("1", "0", "0", "sin(u)"), InitialData(0, "0", "1"))
    assert classify_reduced(gen).kind == "general"
    assert classify_reduced(builtin_example("E7")).kind == "general"


def test_describe_and_format():
    info = describe(builtin_example("E1"))
    assert info["classification"] == "riccati"
    assert info["K_closed_form"] == "u^2"
    text = format_reduction(info)
    assert "u_t = (H + K(u))*exp(-B)" in text and "K' = G = 2 * u" in text and "class: riccati" in text
    assert "(K - 2u)^2 (K + u) = A" in format_reduction(describe(builtin_example("E8")))
    assert "abel" in format_reduction(describe(builtin_example("E5")))


# -- cubic first integral

def test_real_root_zero_A():
    assert real_root_K(1.5, 0.0, "max") == 3.0
    assert real_root_K(3.0, 0.0, "min") == -3.0
    assert real_root_K(-2.0, 0.0, "max") == 2.0


def test_real_root_single_branch():
    K = real_root_K(1.0, 8.0)
    assert (K - 2) ** 2 * (K + 1) == pytest.approx(8.0, abs=1e-10)
    assert K == pytest.approx(3.3553, abs=1e-4)
    with pytest.raises(NoRealBranchError):
        real_root_K(1.0, 8.0, "mid")


@pytest.mark.parametrize("u", [-2.0, -0.3, 0.4, 1.0, 5.0])
@pytest.mark.parametrize("A", [-7.0, -0.5, 0.2, 1.0, 30.0])
def test_real_root_satisfies_cubic(u, A):
    for branch in ("max", "mid", "min"):
        try:
            K = real_root_K(u, A, branch)
        except NoRealBranchError:
            continue
        scale = max(abs(A), abs(K) ** 3, abs(u) ** 3)
        assert abs((K - 2 * u) ** 2 * (K + u) - A) <= 1e-10 * scale


def test_vectorized_roots_match_scalar():
    us = np.array([0.5, 1.0, 1.0, -1.0, 2.0])
    As = np.array([0.1, 8.0, 3.0, 0.5, -1.0])
    for bi, name in enumerate(("min", "mid", "max")):
        got = cubic_roots(us, As, np.full(5, bi))
        for i in range(5):
            try:
                ref = real_root_K(us[i], As[i], name)
            except NoRealBranchError:
                assert np.isnan(got[i])
                continue
            assert got[i] == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_branch_of():
    assert branch_of(1.0, 3.0) == "max"
    assert branch_of(1.0, 1.0) == "mid"
    assert branch_of(1.0, -2.0) == "min"


# -- augmented systems

def _run(system, t1, cfg=IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)):
    return integrate_adaptive(system.rhs, system.y0, system.t0, t1, cfg)


def test_class_two_separable_invariant():
    # E2: K = A e^u so k e^{-u} stays put
    case = builtin_example("E2")
    for x0 in (-0.5, 0.3, 0.9):
        tr = _run(build_class_two_system(case.spec, case.initial, x0), 0.3)
        inv = [y[3] * math.exp(-y[2]) for y in tr.y]
        assert max(inv) - min(inv) <= 1e-8 * abs(inv[0])


def test_class_two_e8_invariant():
    case = builtin_example("E8")
    for x0 in (1.0, 1.3, 2.0):
        tr = _run(build_class_two_system(case.spec, case.initial, x0), 3.0)
        inv = np.array([(y[3] - 2 * y[2]) ** 2 * (y[3] + y[2]) for y in tr.y])
        assert np.max(np.abs(inv - inv[0])) <= 1e-6 * abs(inv[0])


def test_class_one_gauge_invariance():
    case = builtin_example("E1")
    sys0 = build_class_one_system(case.spec, case.initial, 0.4)
    shifted = type(sys0)(sys0.spec, sys0.y0 + np.array([0, 0, -0.7, 0.7, 0]), sys0.t0)
    a, b = _run(sys0, 0.3), _run(shifted, 0.3)
    for t in np.linspace(0, 0.3, 7):
        assert a.sample(t)[4] == pytest.approx(b.sample(t)[4], abs=1e-9)
        assert a.sample(t)[0] == pytest.approx(b.sample(t)[0], abs=1e-12)


def test_user_F_with_k_floor():
    spec = ClassTwoSpec("1", "0", "1 + 2*s/w")
    with pytest.raises(ReductionError):
        build_class_two_system(spec, InitialData(1, "1", "0"), 0.0)
    system = build_class_two_system(spec, InitialData(1, "1", "1"), 0.0)
    with pytest.raises(ReductionError):
        system.rhs(1.0, np.array([0.0, 0.0, 1.0, 1e-14]))


def test_initial_data_outside_domain():
    case = builtin_example("E7")
    with pytest.raises(ReductionError):
        build_class_two_system(case.spec, case.initial, 1.0)


# -- K on characteristics, every evaluation mode


def test_K_exp_mode():
    red = ReducedEquation(builtin_example("E2"))
    x0, u = np.array([0.5, -1.0]), np.array([0.2, 1.0])
    assert np.allclose(red.K(x0, u), x0 ** 2 * np.exp(u), rtol=1e-14)


def test_K_poly_mode():
    red = ReducedEquation(builtin_example("E4"))
    x0, u = np.array([0.5, -1.0]), np.array([0.2, 1.0])
    assert np.allclose(red.K(x0, u), x0 ** 2 + u ** 2 / 2, rtol=1e-14)


def test_K_orbit_mode():
    red = ReducedEquation(builtin_example("E7"))
    x0 = np.array([-0.8, -0.2, 0.1])
    u = np.array([-0.5, 0.0, 0.2])
    ref = 1 / np.sqrt(2 * np.exp(-2 * u) - 1)
    assert np.allclose(red.K(x0, u), ref, rtol=1e-8)


def test_K_generic_mode():
    # E6: K = C u^2 / (1 - C u), C = x0^2 / (1 + x0^2)
    red = ReducedEquation(builtin_example("E6"))
    x0 = np.array([0.2, 0.5, 0.9])
    u = np.array([1.05, 1.2, 0.9])
    c = x0 ** 2 / (1 + x0 ** 2)
    assert np.allclose(red.K(x0, u), c * u ** 2 / (1 - c * u), rtol=1e-8)


def test_K_cubic_mode_keeps_invariant():
    red = ReducedEquation(builtin_example("E8"))
    x0 = np.array([0.5, 1.2, 2.0])
    u = np.array([1.1, 1.5, 3.0])
    K = red.K(x0, u)
    A = (x0 ** 2 - 2) ** 2 * (x0 ** 2 + 1)
    assert np.allclose((K - 2 * u) ** 2 * (K + u), A, rtol=1e-10)


def test_velocity_matches_reduced_E1():
    # u_t = (x + u^2) e^{-t}
    red = ReducedEquation(builtin_example("E1"))
    x, t, u = np.array([0.3, 0.8]), np.array([0.1, 0.25]), np.array([1.2, 0.7])
    assert np.allclose(red.velocity(x, t, u), (x + u ** 2) * np.exp(-t), rtol=1e-10)
