"""Fast K-curves for autonomous right-hand sides.

When ``K^m K' = F(K)`` does not involve ``u`` explicitly, every K-curve is
a shift of one solution ``W`` of ``W' = F(W) / W^m``:

    K(u) = W(W^{-1}(k0) + u - u0).

An :class:`OrbitTable` integrates ``W`` once per orbit (both directions,
dense output) and answers vectorized queries by table lookup plus
bisection on the continuous extension, instead of one ODE solve per query.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .integrate import P, IntegratorConfig, integrate_adaptive

MAX_ORBITS = 16
MAX_SPAN = 1e6


class _Side:
    """One direction of an orbit as flat arrays."""

    def __init__(self, traj):
        self.d = traj.direction
        self.t = np.asarray(traj.t, float)
        self.y = np.array([v[0] for v in traj.y])
        self.h = np.array([h for h, _ in traj.steps])
        self.q = np.array([K[:, 0] @ P for _, K in traj.steps]).reshape(-1, 4)
        self.end = traj.t_end
        # a step underflow on a 1-d autonomous orbit only happens at a singularity
        self.kind = {"completed": "open", "blowup": "blowup", "step_underflow": "blowup"}.get(traj.status, "dead")
        if self.h.size:
            slope = self.q[0, 0] * self.h[0]
            self.sign = 1.0 if slope > 0 else -1.0
        else:
            self.sign = 0.0
        self.w_end = self._dense(np.array([max(len(self.h) - 1, 0)]), np.array([self._theta_end()]))[0] if self.h.size else self.y[0]

    def _theta_end(self):
        i = len(self.h) - 1
        return (self.end - self.t[i]) / self.h[i]

    def _dense(self, i, theta):
        p = np.stack([theta, theta ** 2, theta ** 3, theta ** 4], axis=-1)
        return self.y[i] + self.h[i] * np.sum(self.q[i] * p, axis=-1)

    def value(self, phi):
        i = np.searchsorted(self.d * self.t, self.d * phi, side="right") - 1
        i = np.clip(i, 0, len(self.h) - 1)
        return self._dense(i, (phi - self.t[i]) / self.h[i])

    def inverse(self, w):
        key = self.sign * self.y
        i = np.clip(np.searchsorted(key, self.sign * w, side="right") - 1, 0, len(self.h) - 1)
        lo = np.zeros(w.shape)
        hi = np.where(i == len(self.t) - 1, self._theta_end(), 1.0)
        if len(self.h) == len(self.t) - 1:
            hi = np.ones(w.shape)
        # safeguarded Newton on the quartic continuous extension
        sw = self.sign * w
        q, h, y = self.q[i], self.h[i], self.y[i]
        th = 0.5 * (lo + hi)
        for _ in range(40):
            p = np.stack([th, th ** 2, th ** 3, th ** 4], axis=-1)
            dp = np.stack([np.ones_like(th), 2 * th, 3 * th ** 2, 4 * th ** 3], axis=-1)
            r = self.sign * (y + h * np.sum(q * p, axis=-1)) - sw
            dr = self.sign * h * np.sum(q * dp, axis=-1)
            lo = np.where(r < 0, th, lo)
            hi = np.where(r < 0, hi, th)
            with np.errstate(all="ignore"):
                nxt = th - r / dr
            bad = ~((nxt > lo) & (nxt < hi))
            nxt = np.where(bad, 0.5 * (lo + hi), nxt)
            if np.all(np.abs(nxt - th) <= 1e-15):
                th = nxt
                break
            th = nxt
        return self.t[i] + th * self.h[i]


class _Orbit:
    def __init__(self, g, w_ref, span, cfg, cap):
        self.w_ref, self.span = float(w_ref), span
        self.static = not g(np.array([w_ref]))[0] != 0.0
        if self.static:
            return

        def rhs(_, y):
            return g(y)

        def monitor(_, y):
            return not np.isfinite(y[0]) or abs(y[0]) > cap

        self.sides = [_Side(integrate_adaptive(rhs, [w_ref], 0.0, d * span, cfg, monitor)) for d in (1.0, -1.0)]
        ends = [s.w_end if s.kind != "blowup" else s.sign * np.inf for s in self.sides]
        self.w_lo, self.w_hi = min(ends + [w_ref]), max(ends + [w_ref])

    def covers(self, w):
        if self.static:
            return w == self.w_ref
        return (w >= self.w_lo) & (w <= self.w_hi)

    def _side_for_w(self, w):
        s0 = self.sides[0]
        return np.where(s0.sign * (w - self.w_ref) >= 0, 0, 1)

    def phi_of(self, w):
        out = np.zeros(w.shape)
        which = self._side_for_w(w)
        for k, side in enumerate(self.sides):
            sel = which == k
            if sel.any() and side.h.size:
                out[sel] = side.inverse(w[sel])
        return out

    def value(self, phi):
        """``W(phi)``; NaN marks queries beyond an extendable end."""
        if self.static:
            return np.full(phi.shape, self.w_ref)
        out = np.full(phi.shape, np.nan)
        for side in self.sides:
            sel = side.d * phi >= 0
            if not sel.any():
                continue
            p = phi[sel]
            inside = side.d * p <= side.d * side.end
            vals = np.full(p.shape, np.nan)
            if side.h.size:
                vals[inside] = side.value(p[inside])
            else:
                vals[inside] = self.w_ref
            if side.kind == "blowup":
                vals[~inside] = side.sign * np.inf
            elif side.kind == "dead":
                vals[~inside] = np.inf * 0.0
            out[sel] = vals
        return out

    def needs_extension(self, phi):
        if self.static:
            return np.zeros(phi.shape, bool)
        beyond = np.zeros(phi.shape, bool)
        for side in self.sides:
            if side.kind == "open":
                beyond |= side.d * phi > side.d * side.end
        return beyond


class OrbitTable:
    """Vectorized ``K(u) = W(W^{-1}(k0) + u - u0)`` for ``W' = g(W)``.

    ``__call__`` returns the values and a mask of rows it could not answer
    (too many distinct orbits or shifts beyond ``MAX_SPAN``); callers fall
    back to direct integration for those.
    """

    def __init__(self, g: Callable[[np.ndarray], np.ndarray], cfg: IntegratorConfig, cap: float):
        self.g, self.cfg, self.cap = g, cfg, cap
        self.orbits: list[_Orbit] = []

    def _new_orbit(self, w_ref, span):
        orb = _Orbit(self.g, w_ref, span, self.cfg, self.cap)
        self.orbits.append(orb)
        return orb

    def __call__(self, k0, delta):
        k0 = np.asarray(k0, float)
        delta = np.asarray(delta, float)
        out = np.full(k0.shape, np.nan)
        todo = np.isfinite(k0) & np.isfinite(delta)
        unanswered = np.zeros(k0.shape, bool)
        with np.errstate(all="ignore"):
            for _ in range(4 * MAX_ORBITS):
                if not todo.any():
                    break
                progressed = False
                for j, orb in enumerate(self.orbits):
                    sel = todo & orb.covers(k0)
                    if not sel.any():
                        continue
                    idx = np.flatnonzero(sel)
                    if orb.static:
                        out[idx] = orb.w_ref
                        todo[idx] = False
                        progressed = True
                        continue
                    phi = orb.phi_of(k0[idx]) + delta[idx]
                    ext = orb.needs_extension(phi)
                    if ext.any():
                        need = float(np.max(np.abs(phi[ext])))
                        if need < MAX_SPAN and orb.span < MAX_SPAN:
                            self.orbits[j] = _Orbit(self.g, orb.w_ref, min(MAX_SPAN, max(2 * orb.span, 2 * need + 1)),
                                                    self.cfg, self.cap)
                            progressed = True
                            break
                        unanswered[idx[ext]] = True
                        todo[idx[ext]] = False
                        idx, phi = idx[~ext], phi[~ext]
                    out[idx] = orb.value(phi)
                    todo[idx] = False
                    progressed = True
                else:
                    if todo.any() and len(self.orbits) < MAX_ORBITS:
                        first = np.flatnonzero(todo)[0]
                        span = 2.0 * float(np.max(np.abs(delta[todo]))) + 1.0
                        self._new_orbit(k0[first], min(span, MAX_SPAN))
                        progressed = True
                if not progressed:
                    break
        return out, todo | unanswered
