"""Dormand-Prince 5(4) integration with dense output and blow-up detection.

Three drivers share one tableau:

* :func:`integrate_adaptive` integrates a single system and keeps every
  accepted step so the :class:`Trajectory` can be sampled anywhere.
* :func:`integrate_batch` advances many independent rows, each with its own
  time and step size, stopping exactly on a shared list of output times.
* :func:`solve_interval` integrates many rows over one common interval and
  returns only the end state; rows that turn non-finite are carried as NaN
  without stalling the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .expr import DomainError

# Dormand-Prince tableau; last stage is evaluated at the new point (FSAL).
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Continuous extension: y(t + th*h) = y + h * K^T P [th, th^2, th^3, th^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and limits shared by every integration in the package.

    ``h_min`` and ``h_max`` are fractions of the integration span when left
    as ``None``: ``1e-12 * span`` and ``span`` respectively.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    h_init: Optional[float] = None
    h_min: Optional[float] = None
    h_max: Optional[float] = None
    u_max: float = 1e8
    x_max: float = 1e8
    max_steps: int = 200_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.h_min is not None and self.h_max is not None and not 0 < self.h_min <= self.h_max:
            raise ValueError("need 0 < h_min <= h_max")
        if self.u_max <= 0 or self.x_max <= 0:
            raise ValueError("blow-up thresholds must be positive")

    def steps_for(self, span: float) -> tuple[float, float]:
        span = abs(span)
        h_min = self.h_min if self.h_min is not None else 1e-12 * span
        h_max = self.h_max if self.h_max is not None else span
        return h_min, h_max

    def tightened(self, factor: float) -> "IntegratorConfig":
        return replace(self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor)


class OutOfSpanError(ValueError):
    pass


class IntegrationError(RuntimeError):
    """Raised when an integration cannot reach its end point."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


def _stages(fun, t, y, h, f0):
    """One DOPRI5 step for a single system. Returns (y_new, f_new, K)."""
    K = np.empty((7,) + y.shape)
    K[0] = f0
    for i in range(1, 7):
        dy = np.tensordot(A[i], K[:i], axes=1) if i else 0.0
        K[i] = fun(t + C[i] * h, y + h * dy)
    y_new = y + h * np.tensordot(B[:6], K[:6], axes=1)
    return y_new, K[6], K


def _dense(y_old, h, K, theta):
    q = K.T @ P if K.ndim == 2 else np.einsum("s...,sj->...j", K, P)
    p = np.cumprod(np.full(4, theta))
    return y_old + h * (q @ p)


@dataclass
class Trajectory:
    """Accepted steps of one integration plus its termination status.

    ``status`` is one of ``completed``, ``blowup``, ``step_underflow`` or
    ``domain_error``.  ``t_event`` is the blow-up time or the time at which
    the integration stopped for any other reason.
    """

    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # (h, K) per accepted step
    status: str = "completed"
    t_event: Optional[float] = None
    message: str = ""
    direction: float = 1.0

    @property
    def t0(self) -> float:
        return self.t[0]

    @property
    def t_end(self) -> float:
        return self.t[-1] if self.t_event is None else self.t_event

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]

    def covers(self, t: float) -> bool:
        lo, hi = sorted((self.t[0], self.t_end))
        return lo - 1e-14 * max(1.0, abs(hi)) <= t <= hi + 1e-14 * max(1.0, abs(hi))

    def sample(self, t: float) -> np.ndarray:
        """Dense-output state at ``t``."""
        if not self.covers(t):
            raise OutOfSpanError(f"t={t} outside the covered span [{self.t[0]}, {self.t_end}]")
        ts = self.t
        if self.direction > 0:
            i = int(np.searchsorted(ts, t, side="right")) - 1
        else:
            i = int(np.searchsorted(-np.asarray(ts), -t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 1)
        if ts[i] == t or i == len(ts) - 1:
            if i == len(ts) - 1 and t != ts[i] and self.steps and len(self.steps) >= len(ts):
                # beyond the last stored point but inside the blow-up step
                h, K = self.steps[-1]
                return _dense(self.y[-1], h, K, (t - ts[-1]) / h)
            return np.array(self.y[i], copy=True)
        h, K = self.steps[i]
        return _dense(self.y[i], h, K, (t - ts[i]) / h)


def _initial_step(fun_val_norm, y_norm, span, order=5):
    if y_norm < 1e-5 or fun_val_norm < 1e-5:
        h0 = 1e-6 * max(span, 1e-300)
    else:
        h0 = 0.01 * y_norm / fun_val_norm
    return min(h0, span)


def default_monitor(cfg: IntegratorConfig):
    def exceeded(t, y):
        return not np.all(np.isfinite(y)) or np.max(np.abs(y)) > cfg.u_max
    return exceeded


def integrate_adaptive(
    fun: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t0: float,
    t1: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    monitor: Optional[Callable[[float, np.ndarray], bool]] = None,
) -> Trajectory:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``monitor(t, y)`` returns True once the state counts as blown up; the
    default flags any component beyond ``cfg.u_max``.  The reported blow-up
    time is refined by bisection on the dense output to ``1e-10 * span``.
    """
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    monitor = monitor or default_monitor(cfg)
    direction = math.copysign(1.0, t1 - t0)
    traj = Trajectory(t=[t0], y=[y.copy()], direction=direction)
    span = abs(t1 - t0)
    if span == 0:
        return traj
    h_min, h_max = cfg.steps_for(span)
    try:
        f = np.asarray(fun(t0, y), dtype=float)
    except DomainError as exc:
        traj.status, traj.t_event, traj.message = "domain_error", t0, str(exc)
        return traj
    if monitor(t0, y) or not np.all(np.isfinite(f)):
        traj.status, traj.t_event = "blowup", t0
        return traj

    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    h = cfg.h_init or _initial_step(np.max(np.abs(f) / scale), np.max(np.abs(y) / scale), span)
    h = min(max(h, h_min), h_max)
    t = t0
    for _ in range(cfg.max_steps):
        remaining = abs(t1 - t)
        if remaining <= 1e-15 * max(1.0, abs(t1)):
            break
        h = min(h, remaining)
        try:
            y_new, f_new, K = _stages(fun, t, y, direction * h, f)
            finite = np.all(np.isfinite(y_new)) and np.all(np.isfinite(K))
        except DomainError as exc:
            finite, domain_exc = False, exc
        else:
            domain_exc = None
        if not finite:
            if h <= h_min:
                if domain_exc is not None:
                    traj.status, traj.message = "domain_error", str(domain_exc)
                else:
                    traj.status = "blowup"
                traj.t_event = t
                return traj
            h = max(h * 0.25, h_min)
            continue
        err = direction * h * np.tensordot(E, K, axes=1)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if err_norm > 1.0:
            if h <= h_min:
                traj.status, traj.t_event = "step_underflow", t
                traj.message = f"step size below {h_min:g} at t={t:g}"
                return traj
            h = max(h * max(MIN_FACTOR, SAFETY * err_norm ** -0.2), h_min)
            continue
        t_new = t1 if remaining - h <= 1e-15 * max(1.0, abs(t1)) else t + direction * h
        hd = t_new - t
        traj.steps.append((hd, K))
        if monitor(t_new, y_new):
            traj.status = "blowup"
            traj.t_event = _refine(lambda s: monitor(s, _dense(y, hd, K, (s - t) / hd)), t, t_new, span)
            return traj
        traj.t.append(t_new)
        traj.y.append(y_new.copy())
        t, y, f = t_new, y_new, f_new
        factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
        h = min(max(h * factor, h_min), h_max)
    else:
        traj.status, traj.t_event, traj.message = "step_underflow", t, "step budget exhausted"
    return traj


def _refine(crossed, t_lo, t_hi, span):
    """Bisection for the first time the predicate ``crossed`` turns True."""
    tol = 1e-10 * span
    while abs(t_hi - t_lo) > tol:
        mid = 0.5 * (t_lo + t_hi)
        if crossed(mid):
            t_hi = mid
        else:
            t_lo = mid
    return t_lo


def integrate_fixed(fun, y0, t0: float, t1: float, h: float) -> np.ndarray:
    """Fixed-step fifth-order propagation (no error control)."""
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    n = max(1, int(round(abs(t1 - t0) / h)))
    step = (t1 - t0) / n
    t = t0
    f = np.asarray(fun(t, y), dtype=float)
    for _ in range(n):
        y, f, _ = _stages(fun, t, y, step, f)
        t += step
    return y


# ---------------------------------------------------------------- batches

def _batch_stages(fun, t, y, h, f0):
    """DOPRI5 step for rows with individual (t, h). Shapes: t,h (n,), y (n,d)."""
    n, d = y.shape
    K = np.empty((7, n, d))
    K[0] = f0
    hc = h[:, None]
    for i in range(1, 7):
        dy = np.tensordot(A[i], K[:i], axes=1)
        K[i] = fun(t + C[i] * h, y + hc * dy)
    y_new = y + hc * np.tensordot(B[:6], K[:6], axes=1)
    err = hc * np.tensordot(E, K, axes=1)
    return y_new, K[6], K, err


def _batch_dense(y_old, h, K, theta):
    # y_old (m,d), h (m,), K (7,m,d), theta (m,)
    q = np.einsum("smd,sj->mdj", K, P)
    p = np.cumprod(np.repeat(theta[:, None], 4, axis=1), axis=1)
    return y_old + h[:, None] * np.einsum("mdj,mj->md", q, p)


@dataclass
class BatchResult:
    """Outcome of :func:`integrate_batch`.

    ``values[i, j]`` is row ``i`` at ``stops[j]`` (NaN where not reached);
    ``status[i]`` and ``t_event[i]`` describe how row ``i`` ended.
    """

    stops: np.ndarray
    values: np.ndarray
    status: np.ndarray
    t_event: np.ndarray
    n_steps: int = 0


def integrate_batch(
    fun: Callable[[np.ndarray, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    stops,
    cfg: IntegratorConfig = IntegratorConfig(),
    monitor: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
) -> BatchResult:
    """Advance independent rows of ``y' = fun(t, y)`` through ``stops``.

    ``fun(t, y, rows)`` receives the active rows only: times of shape
    ``(m,)``, states ``(m, d)`` and the row indices; it returns ``(m, d)``
    with NaN marking rows whose right-hand side is undefined.  ``stops``
    must be monotone away from ``t0``; every row steps onto each stop
    exactly.  ``monitor(t, y, rows)`` returns a boolean mask of rows
    considered blown up.
    """
    y0 = np.asarray(y0, dtype=float)
    if y0.ndim == 1:
        y0 = y0[:, None]
    n, d = y0.shape
    stops = np.asarray(stops, dtype=float)
    values = np.full((n, len(stops), d), np.nan)
    status = np.array(["completed"] * n, dtype=object)
    t_event = np.full(n, np.nan)
    if len(stops) == 0 or n == 0:
        return BatchResult(stops, values, status, t_event)
    direction = 1.0 if stops[-1] >= t0 else -1.0
    span = abs(stops[-1] - t0)
    if monitor is None:
        def monitor(t, y, rows):
            return ~np.all(np.isfinite(y), axis=1) | (np.max(np.abs(y), axis=1) > cfg.u_max)

    t = np.full(n, float(t0))
    y = y0.copy()
    nxt = np.zeros(n, dtype=int)  # index of next stop per row
    active = np.ones(n, dtype=bool)

    # rows already sitting on a stop
    def record(rows):
        for _ in range(len(stops)):
            hit = rows[(nxt[rows] < len(stops))]
            hit = hit[np.abs(stops[nxt[hit]] - t[hit]) <= 1e-13 * max(1.0, span)]
            if hit.size == 0:
                break
            values[hit, nxt[hit]] = y[hit]
            nxt[hit] += 1

    everyone = np.arange(n)
    f = np.asarray(fun(t, y, everyone), dtype=float)
    bad = ~np.all(np.isfinite(f), axis=1)
    blown = monitor(t, y, everyone)
    status[bad] = "domain_error"
    status[blown & ~bad] = "blowup"
    t_event[bad | blown] = t0
    active &= ~(bad | blown)
    record(np.flatnonzero(active))
    active &= nxt < len(stops)
    if span == 0:
        return BatchResult(stops, values, status, t_event)

    h_min, h_max = cfg.steps_for(span)
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y)
    with np.errstate(all="ignore"):
        yn = np.max(np.abs(y) / scale, axis=1)
        fn = np.max(np.abs(f) / scale, axis=1)
    h = np.where((yn < 1e-5) | (fn < 1e-5), 1e-6 * span, 0.01 * yn / np.where(fn > 0, fn, 1.0))
    if cfg.h_init:
        h[:] = cfg.h_init
    h = np.clip(np.nan_to_num(h, nan=h_min), h_min, h_max)

    steps = 0
    while active.any():
        steps += 1
        if steps > cfg.max_steps:
            status[active] = "step_underflow"
            t_event[active] = t[active]
            break
        rows = np.flatnonzero(active)
        tr, yr = t[rows], y[rows]
        target = stops[nxt[rows]]
        remaining = np.abs(target - tr)
        hr = np.minimum(h[rows], remaining)
        lands = remaining - hr <= 1e-13 * max(1.0, span)
        hs = direction * hr
        y_new, f_new, K, err = _batch_stages(lambda tt, yy: fun(tt, yy, rows), tr, yr, hs, f[rows])
        finite = np.all(np.isfinite(y_new), axis=1) & np.all(np.isfinite(K), axis=(0, 2))
        sc = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(yr), np.abs(np.where(np.isfinite(y_new), y_new, 0)))
        with np.errstate(all="ignore"):
            en = np.max(np.abs(err) / sc, axis=1)
        en = np.where(finite, en, np.inf)
        accept = en <= 1.0

        # non-finite trial at minimal step: the row is singular here
        dead = ~finite & (hr <= h_min * (1 + 1e-12))
        if dead.any():
            dr = rows[dead]
            rhs_inf = np.any(np.isinf(K[:, dead]), axis=(0, 2)) | np.any(np.isinf(y_new[dead]), axis=1)
            status[dr] = np.where(rhs_inf, "blowup", "domain_error")
            t_event[dr] = t[dr]
            active[dr] = False
        under = finite & ~accept & (hr <= h_min * (1 + 1e-12))
        if under.any():
            ur = rows[under]
            status[ur] = "step_underflow"
            t_event[ur] = t[ur]
            active[ur] = False

        rej = ~accept & ~dead & ~under
        if rej.any():
            rr = rows[rej]
            fac = np.where(np.isfinite(en[rej]), np.maximum(MIN_FACTOR, SAFETY * en[rej] ** -0.2), 0.25)
            h[rr] = np.maximum(hr[rej] * fac, h_min)

        if accept.any():
            ar = rows[accept]
            t_new = np.where(lands[accept], target[accept], tr[accept] + hs[accept])
            hd = t_new - tr[accept]
            yn_acc = y_new[accept]
            blown = monitor(t_new, yn_acc, ar)
            if blown.any():
                br = ar[blown]
                idx = np.flatnonzero(accept)[blown]
                lo, hi = tr[idx].copy(), t_new[blown].copy()
                y_old, hb, Kb = yr[idx], hd[blown], K[:, idx]
                tol = 1e-10 * span
                while np.any(np.abs(hi - lo) > tol):
                    mid = 0.5 * (lo + hi)
                    ym = _batch_dense(y_old, hb, Kb, (mid - tr[idx]) / hb)
                    cross = monitor(mid, ym, br)
                    hi = np.where(cross, mid, hi)
                    lo = np.where(cross, lo, mid)
                status[br] = "blowup"
                t_event[br] = lo
                active[br] = False
            ok = ~blown
            good = ar[ok]
            t[good] = t_new[ok]
            y[good] = yn_acc[ok]
            f[good] = f_new[accept][ok]
            e_ok = en[accept][ok]
            fac = np.where(e_ok == 0, MAX_FACTOR, np.minimum(MAX_FACTOR, SAFETY * np.where(e_ok > 0, e_ok, 1.0) ** -0.2))
            # do not let a short landing step shrink the next step
            base = np.where(lands[accept][ok], np.maximum(hr[accept][ok], h[good]), hr[accept][ok])
            h[good] = np.clip(base * fac, h_min, h_max)
            record(good)
            active[good] &= nxt[good] < len(stops)
    return BatchResult(stops, values, status, t_event, steps)


def solve_interval(fun, y0, s0: float, s1: float, rtol: float, atol: float,
                   max_steps: int = 10_000, y_cap: float = np.inf) -> np.ndarray:
    """Integrate all rows of ``y' = fun(s, y)`` over ``[s0, s1]`` with one
    shared step sequence and return the end states.

    Rows that become non-finite are frozen as NaN.  A row that still fails
    the error test once the step is below ``1e-10`` of the span is heading
    into a singularity; it is frozen as ``+-inf`` so the other rows can go on.
    Rows that leave ``|y| <= y_cap`` are frozen as ``+-inf`` at once; without
    a cap a row creeping towards a pole can use up ``max_steps`` for everyone.
    """
    y = np.array(y0, dtype=float, copy=True)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    span = s1 - s0
    if span == 0 or y.shape[0] == 0:
        return y[:, 0] if squeeze else y
    direction = 1.0 if span > 0 else -1.0
    s = s0
    alive = np.all(np.isfinite(y), axis=1)
    f = np.full_like(y, np.nan)
    if alive.any():
        f[alive] = fun(s, y[alive], alive)
    alive &= np.all(np.isfinite(f), axis=1)
    y[~alive] = np.nan
    h = abs(span) / 8.0
    h_floor = 1e-10 * abs(span)
    steps = 0
    while alive.any() and abs(s1 - s) > 1e-15 * max(1.0, abs(s1)):
        steps += 1
        if steps > max_steps:
            y[alive] = np.nan
            break
        h = min(h, abs(s1 - s))
        ya, fa = y[alive], f[alive]
        mask = alive.copy()
        K = np.empty((7,) + ya.shape)
        K[0] = fa
        with np.errstate(all="ignore"):
            for i in range(1, 7):
                K[i] = fun(s + C[i] * direction * h, ya + direction * h * np.tensordot(A[i], K[:i], axes=1), mask)
            y_new = ya + direction * h * np.tensordot(B[:6], K[:6], axes=1)
            err = h * np.tensordot(E, K, axes=1)
            sc = atol + rtol * np.maximum(np.abs(ya), np.abs(y_new))
            en = np.max(np.abs(err) / sc, axis=1)
        ok = np.all(np.isfinite(y_new), axis=1) & np.all(np.isfinite(K), axis=(0, 2))
        small = h <= h_floor
        if not ok.all() and not small:
            h *= 0.25
            continue
        en = np.where(ok, en, 0.0)
        err_norm = float(np.max(en)) if en.size else 0.0
        if err_norm > 1.0 and not small:
            h = max(h * max(MIN_FACTOR, SAFETY * err_norm ** -0.2), h_floor)
            continue
        idx = np.flatnonzero(alive)
        good = ok & (en <= 1.0)
        y[idx[good]] = y_new[good]
        f[idx[good]] = K[6][good]
        stuck = ok & ~good
        y[idx[stuck]] = np.where(ya[stuck] < 0, -np.inf, np.inf)
        y[idx[~ok]] = np.nan
        alive[idx[~good]] = False
        over = good & (np.max(np.abs(y_new), axis=1) > y_cap)
        y[idx[over]] = np.where(y_new[over] < 0, -np.inf, np.inf)
        alive[idx[over]] = False
        s = s + direction * h
        err_norm = float(np.max(en[good])) if good.any() else 0.0
        h *= MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
    return y[:, 0] if squeeze else y


def solve_interval_regularized(fun, y0, rtol: float, atol: float, y_cap: float = np.inf,
                               max_steps: int = 10_000) -> np.ndarray:
    """End states at ``sigma = 1`` of ``y' = fun(sigma, y, rows)`` started at ``sigma = 0``.

    Each row is integrated in an arc-length-like parameter ``tau`` with
    ``dsigma/dtau = 1 / (1 + |f|)``, so a row running into a finite-sigma
    singularity keeps bounded derivatives and is stopped cheaply once
    ``|y| > y_cap`` (returned as ``+-inf``).  ``fun`` receives per-row
    ``sigma`` and the integer indices of the rows being evaluated.  Rows
    that turn undefined are returned as NaN.  Each row keeps its own step,
    and the end point is located on the dense output of the final step.
    """
    y0 = np.array(y0, dtype=float)
    squeeze = y0.ndim == 1
    if squeeze:
        y0 = y0[:, None]
    n, d = y0.shape
    out = np.full((n, d), np.nan)
    Y = np.zeros((n, d + 1))
    Y[:, 1:] = y0

    def g(Yr, rows):
        with np.errstate(all="ignore"):
            f = fun(Yr[:, 0], Yr[:, 1:], rows)
            w = 1.0 / (1.0 + np.max(np.abs(f), axis=1))
            return np.concatenate([w[:, None], f * w[:, None]], axis=1)

    alive = np.all(np.isfinite(y0), axis=1)
    G = np.full((n, d + 1), np.nan)
    if alive.any():
        G[alive] = g(Y[alive], np.flatnonzero(alive))
    alive &= np.all(np.isfinite(G), axis=1)
    h = np.full(n, 0.125)
    h_min = 1e-13
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Ya, Ga = Y[idx], G[idx]
        ha = np.minimum(h[idx], 1.5 * (1.0 - Ya[:, 0]) / Ga[:, 0])
        hc = ha[:, None]
        K = np.empty((7, idx.size, d + 1))
        K[0] = Ga
        with np.errstate(all="ignore"):
            for i in range(1, 7):
                K[i] = g(Ya + hc * np.tensordot(A[i], K[:i], axes=1), idx)
            Y_new = Ya + hc * np.tensordot(B[:6], K[:6], axes=1)
            err = hc * np.tensordot(E, K, axes=1)
            sc = atol + rtol * np.maximum(np.abs(Ya), np.abs(Y_new))
            en = np.max(np.abs(err) / sc, axis=1)
        ok = np.all(np.isfinite(Y_new), axis=1) & np.all(np.isfinite(K), axis=(0, 2))
        acc = ok & (en <= 1.0)
        with np.errstate(all="ignore"):
            fac = np.where(en == 0, MAX_FACTOR, np.clip(SAFETY * en ** -0.2, MIN_FACTOR, MAX_FACTOR))
        h[idx] = np.where(ok, ha * np.where(acc, fac, np.minimum(fac, 1.0)), 0.25 * ha)
        dead = ~ok & (0.25 * ha < h_min)
        alive[idx[dead]] = False

        a_idx = np.flatnonzero(acc)
        if a_idx.size == 0:
            continue
        rows = idx[a_idx]
        Yn = Y_new[a_idx]
        done = Yn[:, 0] >= 1.0
        if done.any():
            sel = a_idx[done]
            lo, hi = np.zeros(sel.size), np.ones(sel.size)
            y_old, h_s, K_s = Ya[sel], ha[sel], K[:, sel]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                above = _batch_dense(y_old, h_s, K_s, mid)[:, 0] >= 1.0
                hi = np.where(above, mid, hi)
                lo = np.where(above, lo, mid)
            out[idx[sel]] = _batch_dense(y_old, h_s, K_s, hi)[:, 1:]
            alive[idx[sel]] = False
        cont = ~done
        Y[rows[cont]] = Yn[cont]
        G[rows[cont]] = K[6][a_idx[cont]]
        big = cont & (np.max(np.abs(Yn[:, 1:]), axis=1) > y_cap)
        if big.any():
            out[rows[big]] = np.where(Yn[big, 1:] < 0, -np.inf, np.inf)
            alive[rows[big]] = False
    return out[:, 0] if squeeze else out
