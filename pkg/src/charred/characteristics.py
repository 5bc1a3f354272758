"""Characteristic curves dx/dt = a(x, t) and the damping integral B(t)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import Expression
from .integrate import IntegratorConfig, Trajectory, integrate_adaptive, solve_interval


class CharacteristicError(RuntimeError):
    pass


class SingularIntegrandError(CharacteristicError):
    pass


@dataclass(frozen=True)
class CharacteristicCurve:
    """A traced characteristic with its foot point ``x0`` at ``t0``."""

    x0: float
    t0: float
    trajectory: Trajectory

    def x(self, t: float) -> float:
        return float(self.trajectory.sample(t)[0])

    @property
    def samples(self) -> list[tuple[float, float]]:
        return [(t, float(y[0])) for t, y in zip(self.trajectory.t, self.trajectory.y)]


def _speed(a: Expression):
    def f(t, y):
        return np.array([ex.evaluate(a, {"x": y[0], "t": t})])
    return f


def _trace(a, x_start, t_start, t_end, cfg):
    traj = integrate_adaptive(
        _speed(a), [x_start], t_start, t_end, cfg,
        monitor=lambda t, y: not math.isfinite(y[0]) or abs(y[0]) > cfg.x_max,
    )
    if traj.status != "completed":
        raise CharacteristicError(
            f"characteristic from x={x_start} at t={t_start} stopped ({traj.status}) at t={traj.t_event}"
        )
    return traj


def trace_forward(a: Expression, x0: float, t0: float, t1: float,
                  cfg: IntegratorConfig = IntegratorConfig()) -> CharacteristicCurve:
    """Follow the characteristic through ``(x0, t0)`` up to ``t1 > t0``."""
    if not t1 > t0:
        raise ValueError("trace_forward needs t1 > t0")
    return CharacteristicCurve(x0, t0, _trace(a, x0, t0, t1, cfg))


def trace_backward(a: Expression, x: float, t: float, t0: float,
                   cfg: IntegratorConfig = IntegratorConfig(), check: float = 1e-7) -> float:
    """Foot point at ``t0`` of the characteristic through ``(x, t)``.

    The result is verified by tracing forward again; a mismatch larger than
    ``check`` raises :class:`CharacteristicError`.
    """
    if not t > t0:
        raise ValueError("trace_backward needs t > t0")
    x0 = float(_trace(a, x, t, t0, cfg).final[0])
    back = float(_trace(a, x0, t0, t, cfg).final[0])
    if not abs(back - x) <= check * max(1.0, abs(x)):
        raise CharacteristicError(f"round trip missed x={x} by {abs(back - x):.3g}")
    return x0


def damping_integral(b: Expression, t0: float, t: float,
                     cfg: IntegratorConfig = IntegratorConfig()) -> float:
    """``B(t) = integral of b from t0 to t`` (so ``B(t0) = 0``)."""
    if t == t0:
        return 0.0

    def rate(s, y):
        return np.array([ex.evaluate(b, {"t": s})])

    try:
        traj = integrate_adaptive(rate, [0.0], t0, t, cfg)
    except ex.DomainError as exc:
        raise SingularIntegrandError(f"b is singular on [{t0}, {t}]: {exc}") from exc
    if traj.status != "completed":
        raise SingularIntegrandError(
            f"b is singular on [{min(t0, t)}, {max(t0, t)}] ({traj.status} near t={traj.t_event})"
        )
    return float(traj.final[0])


def _reciprocal_coefficient(b: Expression):
    """``c`` when ``b`` is ``c/t``, else None."""
    if isinstance(b, ex.Binary) and b.op == "/" and b.right == ex.Var("t") and not ex.variables(b.left):
        return ex.evaluate(b.left, {})
    return None


class DampingProfile:
    """Vectorized ``B(t)`` and ``exp(B(t))`` on an interval containing ``t0``.

    Polynomial ``b`` and ``b = c/t`` are integrated in closed form; anything
    else goes through the adaptive integrator once, in both directions, and
    is sampled from the dense output.
    """

    def __init__(self, b: Expression, t0: float, t_lo: float, t_hi: float,
                 cfg: IntegratorConfig = IntegratorConfig()):
        self.b, self.t0 = b, float(t0)
        self._poly = ex.polynomial_profile(b, "t")
        if self._poly is not None:
            anti = np.polynomial.polynomial.polyint(self._poly[1])
            self._anti = (anti, float(np.polynomial.polynomial.polyval(self.t0, anti)))
        self._recip = None if self._poly else _reciprocal_coefficient(b)
        self._trajs = []
        if self._recip is not None:
            if min(t_lo, t0) <= 0 <= max(t_hi, t0):
                raise SingularIntegrandError(f"b = c/t is singular at t=0 inside [{t_lo}, {t_hi}]")
        elif self._poly is None:
            for end in (t_lo, t_hi):
                if end != t0:
                    damping_integral(b, t0, end, cfg)  # raises on singular intervals
                    self._trajs.append(integrate_adaptive(
                        lambda s, y: np.array([ex.evaluate(b, {"t": s})]), [0.0], t0, end, cfg))

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self._poly is not None:
            anti, base = self._anti
            return np.polynomial.polynomial.polyval(t, anti) - base
        if self._recip is not None:
            with np.errstate(all="ignore"):
                return self._recip * np.log(t / self.t0)
        out = np.empty(t.shape)
        flat = t.reshape(-1)
        res = out.reshape(-1)
        for i, s in enumerate(flat):
            if s == self.t0:
                res[i] = 0.0
                continue
            traj = next(tr for tr in self._trajs if (tr.direction > 0) == (s > self.t0))
            res[i] = traj.sample(float(s))[0]
        return out

    def weight(self, t) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self(t))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


class FootMap:
    """Vectorized backward tracing to the initial line ``t = t0``.

    ``a = c0 + c1 x`` (no t) is traced in closed form; other speeds are
    integrated with a shared step over the normalized parameter
    ``sigma in [0, 1]``.  Diverging or undefined paths give NaN.
    """

    def __init__(self, a: Expression, t0: float, cfg: IntegratorConfig = IntegratorConfig()):
        self.a, self.t0, self.cfg = a, float(t0), cfg
        self._a = ex.compile_numpy(a, ("x", "t"))
        prof = ex.polynomial_profile(a, "x")
        self.linear = None
        if prof is not None and prof[0] <= 1 and "t" not in ex.variables(a):
            c = prof[1] + [0.0] * (2 - len(prof[1]))
            self.linear = (c[0], c[1])
        self.rtol = max(cfg.rel_tol * 1e-2, 1e-13)
        self.atol = max(cfg.abs_tol * 1e-2, 1e-15)
        self._compiled = {}

    def forward(self, x0, t) -> np.ndarray:
        """Position at ``t`` of the characteristic with foot ``x0`` (linear speeds only)."""
        c0, c1 = self.linear
        dt = np.asarray(t, float) - self.t0
        if c1 == 0:
            return x0 + c0 * dt
        return (x0 + c0 / c1) * np.exp(c1 * dt) - c0 / c1

    def feet(self, x, t) -> np.ndarray:
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if self.linear is not None:
            c0, c1 = self.linear
            dt = t - self.t0
            if c1 == 0:
                return x - c0 * dt
            return (x + c0 / c1) * np.exp(-c1 * dt) - c0 / c1
        return self._integrate(x, t, None, None)[..., 0]

    def feet_and_integral(self, x, t, alpha: Expression, damping: DampingProfile):
        """Foot points and ``int_{t0}^{t} alpha(X(s), s) exp(B(s)) ds`` along each path."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        if not ex.variables(alpha) and ex.evaluate(alpha, {}) == 0.0:
            return self.feet(x, t), np.zeros(x.shape)
        f_alpha = self._compiled.get(alpha)
        if f_alpha is None:
            f_alpha = self._compiled[alpha] = ex.compile_numpy(alpha, ("x", "t"))
        if self.linear is not None:
            x0 = self.feet(x, t)
            nodes, weights = _GL_NODES, _GL_WEIGHTS
            half = 0.5 * (t - self.t0)
            s = self.t0 + half[..., None] * (nodes + 1.0)
            X = self.forward(x0[..., None], s)
            vals = f_alpha(X, s) * damping.weight(s)
            return x0, half * np.sum(weights * vals, axis=-1)
        y = self._integrate(x, t, f_alpha, damping)
        return y[..., 0], y[..., 1]

    def _integrate(self, x, t, f_alpha, damping):
        shape = x.shape
        xf, tf = x.reshape(-1), t.reshape(-1)
        span = tf - self.t0
        d = 1 if f_alpha is None else 2
        y0 = np.zeros((xf.size, d))
        y0[:, 0] = xf

        def rhs(sigma, y, rows):
            sp = span[rows]
            s = tf[rows] - sigma * sp
            dy = np.empty_like(y)
            dy[:, 0] = -sp * self._a(y[:, 0], s)
            if d == 2:
                dy[:, 1] = sp * f_alpha(y[:, 0], s) * damping.weight(s)
            bad = np.abs(y[:, 0]) > self.cfg.x_max
            dy[bad] = np.nan
            return dy

        out = solve_interval(rhs, y0, 0.0, 1.0, self.rtol, self.atol)
        return out.reshape(shape + (d,))
