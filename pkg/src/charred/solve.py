"""Assemble u(x, t) on rectangular grids.

The reduced relation ``u_t = Phi(x, t, u)`` contains no x-derivative, so
at fixed x it is an ODE in t.  Every grid column is integrated from the
initial line with its own adaptive steps, landing exactly on each grid
time; evaluating ``Phi`` traces the characteristic through the current
point back to its foot.  Columns are solved in fixed-size chunks so the
result does not depend on the number of worker threads.
"""

from __future__ import annotations

import datetime as _dt
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .integrate import IntegratorConfig, integrate_batch
from .problem import GridSpec, ProblemCase
from .reduce import ReducedEquation

OK, BLOWUP, OUT_OF_DOMAIN, FAILED = "ok", "blowup", "out_of_domain", "failed"
STATUSES = (OK, BLOWUP, OUT_OF_DOMAIN, FAILED)
CHUNK = 64


@dataclass
class SolutionGrid:
    """Solution values on a lattice.

    ``u`` and ``status`` have shape ``(nt, nx)``: row ``j`` is time
    ``t[j]``.  ``blowup_time[i]`` is the blow-up time of column ``x[i]`` or
    NaN.  Non-ok cells hold NaN in ``u``; ``blowup_sign`` records the sign of
    divergence per column (0 when there is none).
    """

    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    status: np.ndarray
    blowup_time: np.ndarray
    blowup_sign: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.blowup_sign is None:
            self.blowup_sign = np.zeros(len(self.x), dtype=int)

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK

    def value(self, x: float, t: float) -> float:
        i = int(np.argmin(np.abs(self.x - x)))
        j = int(np.argmin(np.abs(self.t - t)))
        return float(self.u[j, i])


def worker_count() -> int:
    env = os.environ.get("CHARRED_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _column_status(status: str) -> str:
    return BLOWUP if status == "blowup" else FAILED


class _ColumnSolver:
    def __init__(self, red: ReducedEquation, cfg: IntegratorConfig):
        self.red, self.cfg = red, cfg

    def run(self, xs: np.ndarray, times: np.ndarray):
        """Values, statuses (len(times), len(xs)), blow-up time and sign per column."""
        red, t0 = self.red, self.red.t0
        n = len(xs)
        u = np.full((len(times), n), np.nan)
        st = np.full((len(times), n), FAILED, dtype=object)
        t_blow = np.full(n, np.nan)
        sign = np.zeros(n, dtype=int)

        u0 = red.u0(xs)
        with np.errstate(all="ignore"):
            v0 = red.velocity(xs, np.full(n, t0), u0)
        valid = np.isfinite(u0) & np.isfinite(v0)
        st[:, ~valid] = OUT_OF_DOMAIN
        cols = np.flatnonzero(valid)
        if cols.size == 0:
            return u, st, t_blow, sign

        at0 = np.flatnonzero(times == t0)
        u[np.ix_(at0, cols)] = u0[cols]
        st[np.ix_(at0, cols)] = OK

        for direction in (1, -1):
            sel = np.flatnonzero(times > t0) if direction > 0 else np.flatnonzero(times < t0)
            if sel.size == 0:
                continue
            order = sel[np.argsort(direction * times[sel])]
            stops = times[order]
            res = self._batch(xs[cols], u0[cols], stops)
            vals = res.values[:, :, 0]  # (ncols, nstops)
            for k, c in enumerate(cols):
                reached = np.isfinite(vals[k])
                u[order[reached], c] = vals[k, reached]
                st[order[reached], c] = OK
                st[order[~reached], c] = _column_status(res.status[k])
                if res.status[k] == "blowup" and direction > 0:
                    t_blow[c] = res.t_event[k]
                    last = vals[k, reached][-1] if reached.any() else u0[c]
                    sign[c] = int(np.sign(last)) or 1
        over = np.abs(u) > self.cfg.u_max
        st[over] = BLOWUP
        u[st != OK] = np.nan
        return u, st, t_blow, sign

    def _batch(self, xs, u0, stops):
        red, cfg = self.red, self.cfg

        def fun(t, y, rows):
            return red.velocity(xs[rows], t, y[:, 0])[:, None]

        def monitor(t, y, rows):
            uu = y[:, 0]
            k = red.k_value(xs[rows], t, uu)
            with np.errstate(invalid="ignore"):
                return ~np.isfinite(uu) | ~np.isfinite(k) | (np.abs(uu) > cfg.u_max) | (np.abs(k) > cfg.u_max)

        return integrate_batch(fun, red.t0, u0[:, None], stops, cfg, monitor)


def solve_columns(case: ProblemCase, xs, times, cfg: IntegratorConfig = IntegratorConfig(),
                  threads: Optional[int] = None, red: Optional[ReducedEquation] = None):
    xs = np.asarray(xs, dtype=float)
    times = np.asarray(times, dtype=float)
    if red is None:
        red = ReducedEquation(case, cfg, float(np.min(times)), float(np.max(times)))
    solver = _ColumnSolver(red, cfg)
    chunks = [np.arange(i, min(i + CHUNK, len(xs))) for i in range(0, len(xs), CHUNK)]
    threads = threads or worker_count()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda idx: solver.run(xs[idx], times), chunks))
    else:
        parts = [solver.run(xs[idx], times) for idx in chunks]
    u = np.concatenate([p[0] for p in parts], axis=1)
    st = np.concatenate([p[1] for p in parts], axis=1)
    tb = np.concatenate([p[2] for p in parts])
    sg = np.concatenate([p[3] for p in parts])
    return u, st, tb, sg


def solve_on_grid(case: ProblemCase, grid: Optional[GridSpec] = None,
                  cfg: IntegratorConfig = IntegratorConfig(), threads: Optional[int] = None) -> SolutionGrid:
    """Solve ``case`` on every point of ``grid`` (the case's default grid if omitted)."""
    grid = grid or case.default_grid
    x, t = grid.x, grid.t
    u, st, tb, sg = solve_columns(case, x, t, cfg, threads)
    meta = {
        "problem": case.id,
        "class": case.cls,
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
        "u_max": cfg.u_max,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return SolutionGrid(x, t, u, st.astype(str), tb, sg, meta)


def solve_points(case: ProblemCase, x, t, cfg: IntegratorConfig = IntegratorConfig(),
                 threads: Optional[int] = None):
    """Values and statuses at scattered points ``(x[i], t[i])``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float).reshape(-1)
    xs, xi = np.unique(x, return_inverse=True)
    ts, ti = np.unique(t, return_inverse=True)
    u, st, _, _ = solve_columns(case, xs, ts, cfg, threads)
    return u[ti, xi], st[ti, xi].astype(str)


@dataclass
class CharacteristicSolution:
    """Field values along one characteristic ``x(t)`` with foot ``x0``.

    ``u`` is the solution at ``(x(t), t)`` and ``k = u_t exp(B)`` there; the
    foot is the same for every point, so ``k`` is a function of ``u`` alone.
    :meth:`sample` solves for a single point afresh rather than
    interpolating between the stored nodes.
    """

    x0: float
    t: np.ndarray
    x: np.ndarray
    B: np.ndarray
    u: np.ndarray
    k: np.ndarray
    status: np.ndarray
    case: ProblemCase = field(repr=False, default=None)
    cfg: IntegratorConfig = field(repr=False, default=None)
    _red: ReducedEquation = field(repr=False, default=None)
    _curve: object = field(repr=False, default=None)

    def position(self, t: float) -> float:
        if self._red.feet_map.linear is not None:
            return float(self._red.feet_map.forward(self.x0, t))
        return self._curve.x(t)

    def sample(self, t: float) -> dict:
        """``x``, ``B``, ``u``, ``k`` and ``status`` at time ``t`` on the curve."""
        lo, hi = sorted((self.t[0], self.t[-1]))
        if not lo <= t <= hi:
            raise ValueError(f"t={t} outside [{lo}, {hi}]")
        x = self.position(t)
        times = np.unique([self._red.t0, t])
        u, st, _, _ = _ColumnSolver(self._red, self.cfg).run(np.array([x]), times)
        j = int(np.searchsorted(times, t))
        val = float(u[j, 0])
        with np.errstate(all="ignore"):
            k = float(self._red.k_value(np.array([x]), np.array([t]), np.array([val]))[0])
        return {"x": x, "B": float(self._red.damping(t)), "u": val, "k": k, "status": str(st[j, 0])}


def solve_along_characteristic(case: ProblemCase, x0: float, t1: float,
                               cfg: IntegratorConfig = IntegratorConfig(), n: int = 41) -> CharacteristicSolution:
    """Solution restricted to the characteristic with foot ``x0`` on ``[t0, t1]``."""
    from .characteristics import trace_forward

    t0 = case.initial.t0
    ts = np.linspace(t0, t1, n)
    red = ReducedEquation(case, cfg, min(t0, t1), max(t0, t1))
    curve = None
    if red.feet_map.linear is not None:
        xs = red.feet_map.forward(np.full(n, float(x0)), ts)
    else:
        if t1 > t0:
            curve = trace_forward(case.spec.a, x0, t0, t1, cfg)
        else:
            raise ValueError("solve_along_characteristic needs t1 > t0 for non-linear speeds")
        xs = np.array([curve.x(s) for s in ts])
    u_all, st_all, _, _ = solve_columns(case, xs, ts, cfg, threads=1, red=red)
    idx = np.arange(n)
    u = u_all[idx, idx]
    st = st_all[idx, idx].astype(str)
    with np.errstate(all="ignore"):
        k = np.where(st == OK, red.k_value(xs, ts, u), np.nan)
    return CharacteristicSolution(float(x0), ts, xs, red.damping(ts), u, k, st, case, cfg, red, curve)


def estimate_blowup_time(case: ProblemCase, x_column: float, cfg: IntegratorConfig = IntegratorConfig(),
                         t_max: Optional[float] = None) -> Optional[float]:
    """First time in ``[t0, t_max]`` at which column ``x_column`` exceeds ``u_max``."""
    t0 = case.initial.t0
    t_max = case.default_grid.t_max if t_max is None else t_max
    if t_max <= t0:
        return None
    red = ReducedEquation(case, cfg, t0, t_max)
    _, st, tb, _ = _ColumnSolver(red, cfg).run(np.array([float(x_column)]), np.array([t0, t_max]))
    return None if np.isnan(tb[0]) else float(tb[0])
