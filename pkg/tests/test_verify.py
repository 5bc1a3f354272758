import math

import numpy as np
import pytest

import oracles
from charred.problem import GridSpec, OracleSpec, builtin_example
from charred.solve import BLOWUP, OK, SolutionGrid
from charred.verify import (
    ResidualReport,
    VerificationError,
    fd_residual,
    implicit_residual,
    oracle_compare,
    residual_field,
)


def _grid_from(fn, spec: GridSpec):
    X, T = np.meshgrid(spec.x, spec.t)
    with np.errstate(all="ignore"):
        u = np.asarray(fn(X, T), float)
    status = np.where(np.isfinite(u), OK, BLOWUP).astype(object)
    return SolutionGrid(spec.x, spec.t, np.where(np.isfinite(u), u, np.nan), status,
                        np.full(len(spec.x), np.nan))


def test_exact_field_has_second_order_residual():
    case = builtin_example("E2")
    r1 = fd_residual(_grid_from(oracles.e2, GridSpec(0, 1, 0, 0.5, 41, 41)), case).max_abs
    r2 = fd_residual(_grid_from(oracles.e2, GridSpec(0, 1, 0, 0.5, 81, 81)), case).max_abs
    assert 1.6 <= math.log2(r1 / r2) <= 2.4


def test_class_one_residual_of_exact_solution():
    case = builtin_example("E1")
    rep = fd_residual(_grid_from(oracles.e1, GridSpec(0.1, 1, 0, 0.3, 61, 61)), case)
    assert rep.max_abs < 1e-3 and rep.count_skipped == 0


def test_residual_detects_wrong_field():
    case = builtin_example("E2")
    spec = GridSpec(0, 1, 0, 0.5, 41, 41)
    wrong = _grid_from(lambda x, t: oracles.e2(x, t) + 0.1 * t ** 2, spec)
    assert fd_residual(wrong, case).max_abs > 0.1


def test_transport_residual_is_zero():
    from charred.problem import ClassOneSpec, InitialData, ProblemCase
    case = ProblemCase("T", 1, ClassOneSpec("1", "0", "0", "0"), InitialData(0, "0", "1"),
                       GridSpec(-1, 1, 0, 1))
    rep = fd_residual(_grid_from(oracles.transport, GridSpec(-1, 1, 0, 1, 11, 11)), case)
    assert rep.max_abs <= 1e-12


def test_exclusion_zone_around_bad_points():
    case = builtin_example("E2")
    g = _grid_from(oracles.e2, GridSpec(0, 1, 0, 0.5, 11, 11))
    g.status[5, 5] = BLOWUP
    g.u[5, 5] = np.nan
    res, good = residual_field(g, case)
    assert not good[4:7, 4:7].any()
    assert good[3, 3] and good[7, 7]
    rep = fd_residual(g, case)
    assert rep.count_evaluated == 81 - 9 and rep.count_skipped == 9


def test_too_few_points():
    case = builtin_example("E2")
    g = _grid_from(oracles.e2, GridSpec(0, 1, 0, 0.5, 4, 4))
    with pytest.raises(VerificationError):
        fd_residual(g, case)


def test_non_uniform_spacing_rejected():
    case = builtin_example("E2")
    g = _grid_from(oracles.e2, GridSpec(0, 1, 0, 0.5, 6, 6))
    g.x = np.array([0, 0.1, 0.3, 0.6, 0.8, 1.0])
    with pytest.raises(VerificationError, match="spacing"):
        fd_residual(g, case)


def test_oracle_compare_and_validity():
    case = builtin_example("E2")
    g = _grid_from(oracles.e2, GridSpec(1, 2, 0, 0.5, 11, 11))
    rep = oracle_compare(g, case.oracle)
    assert rep.max_abs <= 1e-12 * np.nanmax(np.abs(g.u))
    # points past the blow-up curve are excluded, not compared
    assert rep.count_evaluated < g.u.size
    assert rep.count_skipped == g.u.size - rep.count_evaluated


def test_implicit_relation():
    case = builtin_example("E7")
    spec = GridSpec(-1, 0.3, 1, 2, 6, 6)
    u = np.stack([oracles.e7_column(x, spec.t) for x in spec.x], axis=1)
    g = SolutionGrid(spec.x, spec.t, u, np.full(u.shape, OK, dtype=object), np.full(6, np.nan))
    assert implicit_residual(g, case.oracle).max_abs <= 1e-9


def test_oracle_kind_checks():
    g = _grid_from(oracles.e2, GridSpec(0, 1, 0, 0.5, 5, 5))
    with pytest.raises(VerificationError):
        oracle_compare(g, OracleSpec("implicit", "u - x"))
    with pytest.raises(VerificationError):
        implicit_residual(g, OracleSpec("explicit", "x"))
    with pytest.raises(VerificationError, match="no comparable"):
        oracle_compare(g, OracleSpec("explicit", "x", validity="-1"))


def test_report_dict():
    d = ResidualReport(1.0, 0.5, 3, 1, (0.1, 0.2)).to_dict()
    assert d == {"max_abs": 1.0, "mean_abs": 0.5, "count_evaluated": 3, "count_skipped": 1,
                 "worst_point": [0.1, 0.2]}
