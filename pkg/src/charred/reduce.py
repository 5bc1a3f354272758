"""Reduction of the two PDE classes to first-order relations.

Class I reduces to ``u_t = (H + K(u)) exp(-B)`` with ``K' = G`` and ``H``
accumulating ``alpha exp(B)`` along each characteristic.  Class II reduces
to ``u_t = K(u) exp(-B)`` with ``K^m K' = F(u, K)``, where the integration
constant of ``K`` is fixed separately on every characteristic.

Two views are provided.  The augmented systems follow one characteristic
and carry ``k = K(u)`` as ODE state next to ``u``; their ``(u, k)`` orbit is
exactly the curve ``k = K(u)`` of that characteristic.  The
:class:`ReducedEquation` evaluates the reduced relation at arbitrary grid
points, which is what the grid solver integrates in t at fixed x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as ex
from .characteristics import DampingProfile, FootMap
from .integrate import IntegratorConfig, solve_interval_regularized
from .orbits import OrbitTable
from .problem import ClassOneSpec, ClassTwoSpec, InitialData, ProblemCase

K_FLOOR = 1e-12


class ReductionError(ValueError):
    pass


class NoRealBranchError(ReductionError):
    pass


# ---------------------------------------------------------------- augmented systems

@dataclass(frozen=True)
class AugmentedSystemI:
    """State ``(x, B, H, k, u)`` along one characteristic of a Class I problem."""

    spec: ClassOneSpec
    y0: np.ndarray
    t0: float
    names = ("x", "B", "H", "k", "u")

    def rhs(self, t, y):
        x, B, H, k, u = y
        s = self.spec
        decay = math.exp(-B)
        ut = (H + k) * decay
        return np.array([
            ex.evaluate(s.a, {"x": x, "t": t}),
            ex.evaluate(s.b, {"t": t}),
            ex.evaluate(s.alpha, {"x": x, "t": t}) * math.exp(B),
            ex.evaluate(s.G, {"u": u}) * ut,
            ut,
        ])

    __call__ = rhs


@dataclass(frozen=True)
class AugmentedSystemII:
    """State ``(x, B, u, k)`` along one characteristic of a Class II problem."""

    spec: ClassTwoSpec
    y0: np.ndarray
    t0: float
    names = ("x", "B", "u", "k")

    def rhs(self, t, y):
        x, B, u, k = y
        s = self.spec
        decay = math.exp(-B)
        if s.closure == "cubic":
            dk = (k + 2.0 * u) * decay
        else:
            if _singular_in_w(s) and abs(k) < K_FLOOR:
                raise ReductionError(f"|k| = {abs(k):.3g} below the floor {K_FLOOR:g}")
            dk = ex.evaluate(s.F, {"s": u, "w": k}) * k ** (1 - s.m) * decay
        return np.array([
            ex.evaluate(s.a, {"x": x, "t": t}),
            ex.evaluate(s.b, {"t": t}),
            k * decay,
            dk,
        ])

    __call__ = rhs


def _initial_values(initial: InitialData, x0: float) -> tuple[float, float]:
    try:
        u0 = ex.evaluate(initial.u0, {"x": x0})
        ut0 = ex.evaluate(initial.ut0, {"x": x0})
    except ex.DomainError as exc:
        raise ReductionError(f"initial data undefined at x0={x0}: {exc}") from exc
    if not (math.isfinite(u0) and math.isfinite(ut0)):
        raise ReductionError(f"non-finite initial data at x0={x0}")
    return u0, ut0


def build_class_one_system(spec: ClassOneSpec, initial: InitialData, x0: float) -> AugmentedSystemI:
    """Augmented system with gauge ``K(u0) = 0``, so ``H(t0) = u_t(x0, t0)``."""
    u0, ut0 = _initial_values(initial, x0)
    return AugmentedSystemI(spec, np.array([x0, 0.0, ut0, 0.0, u0]), initial.t0)


def _singular_in_w(spec: ClassTwoSpec) -> bool:
    if spec.m >= 1:
        return True
    f = ex.compile_numpy(spec.F, ("s", "w"))
    probe = f(np.array([0.731, -1.37, 2.19]), np.zeros(3))
    return not np.all(np.isfinite(probe))


def build_class_two_system(spec: ClassTwoSpec, initial: InitialData, x0: float) -> AugmentedSystemII:
    u0, ut0 = _initial_values(initial, x0)
    if spec.closure is None and _singular_in_w(spec) and abs(ut0) < K_FLOOR:
        raise ReductionError(f"initial k = {ut0:g} lies on the singular set of F k^(1-m)")
    return AugmentedSystemII(spec, np.array([x0, 0.0, u0, ut0]), initial.t0)


# ---------------------------------------------------------------- classification

@dataclass(frozen=True)
class ODEClass:
    kind: str  # separable | linear | riccati | abel | general
    degree: Optional[int] = None

    def __str__(self):
        return self.kind if self.degree is None else f"{self.kind} (degree {self.degree})"


def _by_degree(d: int) -> ODEClass:
    names = {0: "separable", 1: "linear", 2: "riccati", 3: "abel"}
    return ODEClass(names.get(d, "general"), d)


def classify_reduced(case: ProblemCase) -> ODEClass:
    """Type of the reduced first-order equation in u.

    The degree reported is the polynomial degree of ``K`` in u, i.e. of the
    right-hand side of the reduced equation.
    """
    s = case.spec
    if case.cls == 1:
        prof = ex.polynomial_profile(s.G, "u")
        if prof is None:
            return ODEClass("general")
        deg, coeffs = prof
        if deg == 0 and coeffs[0] == 0:
            return _by_degree(0)
        return _by_degree(deg + 1)
    if s.closure is not None:
        return ODEClass("general")
    names = ex.variables(s.F)
    if "s" not in names and s.m == 0:
        prof = ex.polynomial_profile(s.F, "w")
        if prof is not None and prof[0] == 1 and prof[1][0] == 0:
            return ODEClass("separable")
    if "w" not in names and s.m == 0:
        prof = ex.polynomial_profile(s.F, "s")
        if prof is not None:
            deg, coeffs = prof
            return _by_degree(0 if deg == 0 and coeffs[0] == 0 else deg + 1)
    return ODEClass("general")


# ---------------------------------------------------------------- cubic first integral

def _cubic(K, u, A):
    return (K - 2.0 * u) ** 2 * (K + u) - A


def _bisect(u, A, lo, hi):
    flo = _cubic(lo, u, A)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = _cubic(mid, u, A)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _cubic_scale(K, u, A):
    return max(abs(A), abs(K) ** 3, abs(u) ** 3, 1e-300)


def real_root_K(u: float, A: float, branch: str = "max") -> float:
    """Real ``K`` with ``(K - 2u)^2 (K + u) = A``.

    ``branch`` picks the largest, middle or smallest real root.  For
    ``A = 0`` the roots are ``2u`` (double) and ``-u``.  Where the cubic has
    a single real root the Cardano closed form is used; otherwise the
    requested root is bracketed by the turning points ``0`` and ``2u`` and
    found by bisection.
    """
    if branch not in ("max", "mid", "min"):
        raise ValueError(f"unknown branch {branch!r}")
    if A == 0:
        roots = sorted([2.0 * u, 2.0 * u, -u])
        return {"max": roots[2], "mid": roots[1], "min": roots[0]}[branch]
    radicand = A * A - 4.0 * A * u ** 3
    if radicand > 0:
        if branch == "mid":
            raise NoRealBranchError(f"only one real root for u={u}, A={A}")
        inner = math.sqrt(radicand) - 2.0 * u ** 3 + A
        c = np.cbrt(inner)
        if c != 0:
            K = float(c / np.cbrt(2.0) + np.cbrt(2.0) * u * u / c + u)
            if abs(_cubic(K, u, A)) <= 1e-12 * _cubic_scale(K, u, A):
                return K
        # cancellation in the closed form: bracket the single root instead
        bound = 3.0 * abs(u) + abs(A) ** (1.0 / 3.0) + 1.0
        lo, hi = -bound, bound
        return _bisect(u, A, lo, hi)
    lo_c, hi_c = sorted((0.0, 2.0 * u))
    bound = 3.0 * abs(u) + abs(A) ** (1.0 / 3.0) + 1.0
    bracket = {"min": (-bound, lo_c), "mid": (lo_c, hi_c), "max": (hi_c, bound)}[branch]
    return _bisect(u, A, *bracket)


def branch_of(u0: float, k0: float) -> str:
    """Root branch of the cubic that passes through ``(u0, k0)``."""
    lo_c, hi_c = sorted((0.0, 2.0 * u0))
    if k0 > hi_c:
        return "max"
    if k0 < lo_c:
        return "min"
    return "mid"


_BRANCH_INDEX = {"min": 0, "mid": 1, "max": 2}


def cubic_roots(u, A, branch_index):
    """Vectorized root selection: ``branch_index`` 0=min, 1=mid, 2=max.

    NaN where the requested branch does not exist.
    """
    u, A, bi = np.broadcast_arrays(np.asarray(u, float), np.asarray(A, float), np.asarray(branch_index))
    p = -3.0 * u * u
    q = 2.0 * u ** 3 - A
    disc = A * (4.0 * u ** 3 - A)  # > 0: three real roots
    out = np.full(u.shape, np.nan)
    three = disc >= 0
    if three.any():
        uu, pp, qq = u[three], p[three], q[three]
        r = np.abs(uu)
        with np.errstate(all="ignore"):
            arg = np.where(r > 0, (3.0 * qq / (2.0 * pp)) * np.sqrt(-3.0 / np.where(pp < 0, pp, -1.0)), 0.0)
        phi = np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0
        ys = np.stack([2.0 * r * np.cos(phi - 2.0 * np.pi * k / 3.0) for k in range(3)])
        ys.sort(axis=0)
        pick = np.take_along_axis(ys, bi[three][None, :].astype(int), axis=0)[0]
        out[three] = pick + uu
    one = ~three
    if one.any():
        qq, pp = q[one], p[one]
        sq = np.sqrt(qq * qq / 4.0 + pp ** 3 / 27.0)
        y = np.cbrt(-qq / 2.0 + sq) + np.cbrt(-qq / 2.0 - sq)
        out[one] = np.where(bi[one] == 1, np.nan, y + u[one])
    return _polish(out, u, A)


def _polish(K, u, A, iterations: int = 3):
    """Newton steps on the cubic; the trigonometric form is imprecise near the double root."""
    with np.errstate(all="ignore"):
        for _ in range(iterations):
            f = _cubic(K, u, A)
            df = 3.0 * K * (K - 2.0 * u)
            step = np.where(df != 0, f / df, 0.0)
            trial = K - step
            better = np.isfinite(trial) & (np.abs(_cubic(trial, u, A)) < np.abs(f))
            K = np.where(better, trial, K)
    return K


# ---------------------------------------------------------------- reduced relation

class ReducedEquation:
    """Vectorized ``u_t = Phi(x, t, u)`` for a problem case.

    For every evaluation point the characteristic is traced back to its foot
    ``x0``; the per-characteristic constants of ``H`` and ``K`` come from the
    initial data there.  Points where the relation is undefined give NaN.
    """

    def __init__(self, case: ProblemCase, cfg: IntegratorConfig = IntegratorConfig(),
                 t_lo: Optional[float] = None, t_hi: Optional[float] = None):
        self.case, self.cfg = case, cfg
        t0 = case.initial.t0
        t_lo = min(t0, case.default_grid.t_min if t_lo is None else t_lo)
        t_hi = max(t0, case.default_grid.t_max if t_hi is None else t_hi)
        s = case.spec
        self.t0 = t0
        self.damping = DampingProfile(s.b, t0, t_lo, t_hi, cfg)
        self.feet_map = FootMap(s.a, t0, cfg)
        self.u0 = ex.compile_numpy(case.initial.u0, ("x",))
        self.ut0 = ex.compile_numpy(case.initial.ut0, ("x",))
        self.rtol = max(cfg.rel_tol * 1e-1, 1e-13)
        self.atol = max(cfg.abs_tol * 1e-1, 1e-15)
        if case.cls == 1:
            prof = ex.polynomial_profile(s.G, "u")
            self._G_anti = None if prof is None else np.polynomial.polynomial.polyint(prof[1])
            self._G = ex.compile_numpy(s.G, ("u",))
        else:
            self._F = ex.compile_numpy(s.F, ("s", "w"))
            self._k_mode = self._pick_k_mode(s)
            self._guard = s.closure is None and _singular_in_w(s)
            if self._k_mode[0] == "ode" and "s" not in ex.variables(s.F):
                self._orbits = OrbitTable(self._autonomous_rate, IntegratorConfig(
                    rel_tol=max(cfg.rel_tol * 1e-3, 1e-13), abs_tol=max(cfg.abs_tol * 1e-3, 1e-15),
                    max_steps=cfg.max_steps), cap=10.0 * cfg.u_max)
                self._k_mode = ("orbit",)

    @staticmethod
    def _pick_k_mode(s: ClassTwoSpec):
        if s.closure == "cubic":
            return ("cubic",)
        names = ex.variables(s.F)
        if s.m == 0 and "s" not in names:
            prof = ex.polynomial_profile(s.F, "w")
            if prof is not None and prof[0] == 1 and prof[1][0] == 0:
                return ("exp", prof[1][1])
        if s.m == 0 and "w" not in names:
            prof = ex.polynomial_profile(s.F, "s")
            if prof is not None:
                return ("poly", np.polynomial.polynomial.polyint(prof[1]))
        return ("ode",)

    def _autonomous_rate(self, w):
        m = self.case.spec.m
        with np.errstate(all="ignore"):
            r = self._F(np.zeros_like(w), w) / (w ** m if m else 1.0)
        if self._guard:
            r = np.where(np.abs(w) < K_FLOOR, np.nan, r)
        return r

    # -- pieces

    def feet(self, x, t):
        return self.feet_map.feet(x, t)

    def _antiderivative_G(self, lo, hi):
        if self._G_anti is not None:
            pv = np.polynomial.polynomial.polyval
            return pv(hi, self._G_anti) - pv(lo, self._G_anti)
        nodes, weights = np.polynomial.legendre.leggauss(24)
        half = 0.5 * (hi - lo)
        pts = lo[..., None] + half[..., None] * (nodes + 1.0)
        return half * np.sum(weights * self._G(pts), axis=-1)

    def K(self, x0, u):
        """``K`` on the characteristic with foot ``x0`` evaluated at ``u``.

        For Class I this is the ``H + K`` combination minus ``H``; callers use
        :meth:`k_value` instead.
        """
        x0, u = np.broadcast_arrays(np.asarray(x0, float), np.asarray(u, float))
        u0, k0 = self.u0(x0), self.ut0(x0)
        mode = self._k_mode
        if mode[0] == "exp":
            with np.errstate(over="ignore"):
                return k0 * np.exp(mode[1] * (u - u0))
        if mode[0] == "poly":
            pv = np.polynomial.polynomial.polyval
            return k0 + pv(u, mode[1]) - pv(u0, mode[1])
        if mode[0] == "cubic":
            A = (k0 - 2.0 * u0) ** 2 * (k0 + u0)
            idx = np.vectorize(lambda a, b: _BRANCH_INDEX[branch_of(a, b)], otypes=[int])(u0, k0)
            return cubic_roots(u, A, idx)
        u0, k0, u = u0.reshape(-1), k0.reshape(-1), u.reshape(-1)
        if mode[0] == "orbit":
            out, miss = self._orbits(k0, u - u0)
            if miss.any():
                out[miss] = self._k_ode(u0[miss], k0[miss], u[miss])
            return out.reshape(x0.shape)
        return self._k_ode(u0, k0, u).reshape(x0.shape)

    def _k_ode(self, u0, k0, u):
        delta = u - u0
        m = self.case.spec.m
        guard = self._guard

        def rhs(sigma, y, rows):
            K = y[:, 0]
            s = u0[rows] + sigma * delta[rows]
            with np.errstate(all="ignore"):
                dk = delta[rows] * self._F(s, K) / (K ** m if m else 1.0)
            if guard:
                dk = np.where(np.abs(K) < K_FLOOR, np.nan, dk)
            return dk[:, None]

        y0 = np.where(np.isfinite(u0) & np.isfinite(u), k0, np.nan)
        return solve_interval_regularized(rhs, y0, self.rtol, self.atol, y_cap=10.0 * self.cfg.u_max)

    def k_value(self, x, t, u):
        """``u_t exp(B)`` at the points ``(x, t)`` for solution values ``u``."""
        x, t, u = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float), np.asarray(u, float))
        if self.case.cls == 1:
            x0, integral = self.feet_map.feet_and_integral(x, t, self.case.spec.alpha, self.damping)
            H = self.ut0(x0) + integral
            return H + self._antiderivative_G(self.u0(x0), u)
        x0 = self.feet_map.feet(x, t)
        return self.K(x0, u)

    def velocity(self, x, t, u):
        """``u_t`` at ``(x, t)``; NaN where the relation is undefined."""
        k = self.k_value(x, t, u)
        with np.errstate(all="ignore"):
            return k * np.exp(-self.damping(np.asarray(t, float)))


# ---------------------------------------------------------------- reporting

def describe(case: ProblemCase) -> dict:
    """Human- and JSON-friendly summary of the reduction of ``case``."""
    s = case.spec
    cls = classify_reduced(case)
    info = {"id": case.id, "class": case.cls, "classification": cls.kind, "degree": cls.degree}
    b = ex.to_string(s.b)
    if case.cls == 1:
        info["reduced"] = "u_t = (H + K(u))*exp(-B)"
        info["H"] = f"H' = ({ex.to_string(s.alpha)})*exp(B) along dx/dt = {ex.to_string(s.a)}"
        info["K"] = f"K' = G = {ex.to_string(s.G)}"
        prof = ex.polynomial_profile(s.G, "u")
        if prof is not None:
            anti = np.polynomial.polynomial.polyint(prof[1])
            info["K_closed_form"] = _poly_string(anti, "u")
    else:
        info["reduced"] = "u_t = K(u)*exp(-B)"
        lhs = "K'" if s.m == 0 else ("K*K'" if s.m == 1 else f"K^{s.m}*K'")
        F = ex.to_string(s.F, {"s": "u", "w": "K"})
        info["K"] = f"{lhs} = F(u, K) = {F}"
        if s.closure == "cubic" or _is_e8_form(s):
            info["first_integral"] = "(K - 2u)^2 (K + u) = A"
    info["B"] = f"B(t) = integral of {b} from t0 = {case.initial.t0:g}"
    return info


def _is_e8_form(s: ClassTwoSpec) -> bool:
    try:
        return s.m == 0 and s.F == ex.parse("1 + 2*s/w")
    except ex.ExpressionError:  # pragma: no cover
        return False


def _poly_string(coeffs, var):
    terms = []
    for i, c in enumerate(coeffs):
        if c == 0:
            continue
        c_txt = f"{c:g}"
        if i == 0:
            terms.append(c_txt)
        elif i == 1:
            terms.append(var if c == 1 else f"{c_txt}*{var}")
        else:
            terms.append(f"{var}^{i}" if c == 1 else f"{c_txt}*{var}^{i}")
    return " + ".join(terms) if terms else "0"


def format_reduction(info: dict) -> str:
    lines = [f"{info['id']} (class {'I' if info['class'] == 1 else 'II'})", f"  reduced: {info['reduced']}"]
    for key in ("H", "K", "K_closed_form", "first_integral", "B"):
        if key in info:
            lines.append(f"  {key}: {info[key]}")
    deg = "" if info["degree"] is None else f" (degree {info['degree']})"
    lines.append(f"  class: {info['classification']}{deg}")
    return "\n".join(lines)
