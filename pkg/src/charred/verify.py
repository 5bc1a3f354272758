"""Checks of computed grids that do not depend on how they were computed.

Three kinds of evidence: finite-difference residuals of the original
second-order PDE, differences from an explicit reference solution, and the
value of an implicit relation g(x, t, u) that must vanish.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import expr as ex
from .characteristics import DampingProfile
from .problem import OracleSpec, ProblemCase
from .solve import OK, SolutionGrid

__all__ = [
    "OracleSpec",
    "ResidualReport",
    "VerificationError",
    "fd_residual",
    "oracle_compare",
    "implicit_residual",
    "residual_field",
]

MIN_POINTS = 9


class VerificationError(ValueError):
    pass


@dataclass(frozen=True)
class ResidualReport:
    """Error statistics over the evaluated points."""

    max_abs: float
    mean_abs: float
    count_evaluated: int
    count_skipped: int
    worst_point: tuple[float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_point"] = list(self.worst_point)
        return d


def _report(values: np.ndarray, mask: np.ndarray, X: np.ndarray, T: np.ndarray, candidates: int) -> ResidualReport:
    vals = np.abs(values[mask])
    j = int(np.argmax(vals))
    worst = (float(X[mask][j]), float(T[mask][j]))
    n = int(mask.sum())
    return ResidualReport(float(vals[j]), float(vals.mean()), n, int(candidates - n), worst)


def _uniform_step(v: np.ndarray, name: str) -> float:
    d = np.diff(v)
    if d.size == 0 or not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
        raise VerificationError(f"{name} spacing must be uniform with at least two points")
    return float(d[0])


def _validity_mask(oracle: OracleSpec, X, T, U) -> np.ndarray:
    if oracle.validity is None:
        return np.ones(X.shape, bool)
    f = ex.compile_numpy(oracle.validity, ("x", "t", "u"))
    with np.errstate(all="ignore"):
        v = np.broadcast_to(f(X, T, U), X.shape)
    return np.isfinite(v) & (v > 0)


def residual_field(grid: SolutionGrid, case: ProblemCase):
    """PDE residual at interior points plus the mask of evaluable points.

    A point is evaluable when it and all eight neighbours are ok, so every
    stencil (including the cross difference for ``u_xt``) sees only finite
    values.
    """
    hx = _uniform_step(grid.x, "x")
    ht = _uniform_step(grid.t, "t")
    u = grid.u
    ok = grid.status == OK
    if u.shape[0] < 3 or u.shape[1] < 3:
        raise VerificationError("grid needs at least 3 points in each direction")

    good = ok.copy()
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            good[1:-1, 1:-1] &= ok[1 + dj:u.shape[0] - 1 + dj, 1 + di:u.shape[1] - 1 + di]
    good[0, :] = good[-1, :] = False
    good[:, 0] = good[:, -1] = False

    c = u[1:-1, 1:-1]
    ut = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * ht)
    ux = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * hx)
    utt = (u[2:, 1:-1] - 2 * c + u[:-2, 1:-1]) / ht ** 2
    uxt = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * hx * ht)

    X, T = np.meshgrid(grid.x[1:-1], grid.t[1:-1])
    s = case.spec
    a = np.broadcast_to(ex.compile_numpy(s.a, ("x", "t"))(X, T), X.shape)
    b = np.broadcast_to(ex.compile_numpy(s.b, ("t",))(T), X.shape)
    t0 = case.initial.t0
    B = DampingProfile(s.b, t0, min(t0, grid.t[0]), max(t0, grid.t[-1]))(T)
    transport = ut + a * ux
    with np.errstate(all="ignore"):
        if case.cls == 1:
            alpha = ex.compile_numpy(s.alpha, ("x", "t"))(X, T)
            G = ex.compile_numpy(s.G, ("u",))(c)
            r = utt + a * uxt + b * ut - alpha - G * transport * np.exp(-B)
        else:
            m = s.m
            F = ex.compile_numpy(s.F, ("s", "w"))(c, ut * np.exp(B))
            lhs = (ut ** m if m else 1.0) * (utt + a * uxt) + b * ut ** (m + 1)
            r = lhs - np.exp(-(m + 1) * B) * transport * F
    res = np.full(u.shape, np.nan)
    res[1:-1, 1:-1] = r
    good &= np.isfinite(res)
    return res, good


def fd_residual(grid: SolutionGrid, case: ProblemCase) -> ResidualReport:
    """Second-order finite-difference residual of the PDE on ``grid``."""
    res, good = residual_field(grid, case)
    if good.sum() < MIN_POINTS:
        raise VerificationError(f"only {int(good.sum())} evaluable interior points (need {MIN_POINTS})")
    X, T = np.meshgrid(grid.x, grid.t)
    interior = (len(grid.t) - 2) * (len(grid.x) - 2)
    return _report(res, good, X, T, interior)


def oracle_compare(grid: SolutionGrid, oracle: OracleSpec) -> ResidualReport:
    """``|u_num - u_oracle|`` over ok points inside the oracle's validity domain."""
    if oracle.kind != "explicit":
        raise VerificationError(f"oracle_compare needs an explicit oracle, got {oracle.kind!r}")
    X, T = np.meshgrid(grid.x, grid.t)
    with np.errstate(all="ignore"):
        ref = np.broadcast_to(ex.compile_numpy(oracle.expression, ("x", "t"))(X, T), X.shape)
    mask = (grid.status == OK) & _validity_mask(oracle, X, T, grid.u) & np.isfinite(ref)
    if not mask.any():
        raise VerificationError("no comparable points")
    return _report(grid.u - ref, mask, X, T, X.size)


def implicit_residual(grid: SolutionGrid, oracle: OracleSpec) -> ResidualReport:
    """``|g(x, t, u_num)|`` over ok points inside the validity domain."""
    if oracle.kind != "implicit":
        raise VerificationError(f"implicit_residual needs an implicit oracle, got {oracle.kind!r}")
    X, T = np.meshgrid(grid.x, grid.t)
    with np.errstate(all="ignore"):
        g = np.broadcast_to(ex.compile_numpy(oracle.expression, ("x", "t", "u"))(X, T, grid.u), X.shape)
    mask = (grid.status == OK) & _validity_mask(oracle, X, T, grid.u) & np.isfinite(g)
    if not mask.any():
        raise VerificationError("no comparable points")
    return _report(g, mask, X, T, X.size)
