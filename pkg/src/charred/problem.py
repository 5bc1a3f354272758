"""Problem instances, JSON problem documents and the built-in examples E1-E8."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import jsonschema
import numpy as np

from . import expr as ex
from .expr import Expression


class ProblemError(ValueError):
    """Invalid problem document or specification."""


def _check_vars(e: Expression, allowed: set[str], where: str) -> Expression:
    extra = ex.variables(e) - allowed
    if extra:
        raise ProblemError(
            f"{where} may only reference {sorted(allowed)}, found {sorted(extra)}"
        )
    return e


def _as_expr(value, allowed: set[str], where: str) -> Expression:
    if isinstance(value, (int, float)):
        value = repr(float(value))
    if isinstance(value, str):
        try:
            value = ex.parse(value)
        except ex.ExpressionError as exc:
            raise ProblemError(f"{where}: {exc}") from exc
    return _check_vars(value, allowed, where)


@dataclass(frozen=True)
class ClassOneSpec:
    """``u_tt + a u_xt + b u_t = alpha + G(u) (u_t + a u_x) exp(-B)``."""

    a: Expression
    b: Expression
    alpha: Expression
    G: Expression

    def __post_init__(self):
        object.__setattr__(self, "a", _as_expr(self.a, {"x", "t"}, "a"))
        object.__setattr__(self, "b", _as_expr(self.b, {"t"}, "b"))
        object.__setattr__(self, "alpha", _as_expr(self.alpha, {"x", "t"}, "alpha"))
        object.__setattr__(self, "G", _as_expr(self.G, {"u"}, "G"))


@dataclass(frozen=True)
class ClassTwoSpec:
    """``u_t^m (u_tt + a u_xt) + b u_t^(m+1) = exp(-(m+1)B) (u_t + a u_x) F(u, u_t exp(B))``.

    ``F`` is written in ``s`` (standing for u) and ``w`` (standing for
    ``u_t exp(B)``).  ``closure`` names an algebraic first integral used in
    place of integrating ``K`` numerically; only ``"cubic"`` (the relation
    ``(K - 2u)^2 (K + u) = A`` of ``F = 1 + 2 s/w``) is known.
    """

    a: Expression
    b: Expression
    F: Expression
    m: int = 0
    closure: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "a", _as_expr(self.a, {"x", "t"}, "a"))
        object.__setattr__(self, "b", _as_expr(self.b, {"t"}, "b"))
        object.__setattr__(self, "F", _as_expr(self.F, {"s", "w"}, "F"))
        if not isinstance(self.m, (int, np.integer)) or isinstance(self.m, bool) or self.m < 0:
            raise ProblemError(f"m must be a non-negative integer, got {self.m!r}")
        if self.closure not in (None, "cubic"):
            raise ProblemError(f"unknown closure {self.closure!r}")


@dataclass(frozen=True)
class InitialData:
    t0: float
    u0: Expression
    ut0: Expression

    def __post_init__(self):
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "u0", _as_expr(self.u0, {"x"}, "u0"))
        object.__setattr__(self, "ut0", _as_expr(self.ut0, {"x"}, "ut0"))


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    t_min: float
    t_max: float
    nx: int = 101
    nt: int = 101

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ProblemError("grid needs x_min < x_max")
        if not self.t_min <= self.t_max:
            raise ProblemError("grid needs t_min <= t_max")
        if int(self.nx) < 2 or int(self.nt) < 2:
            raise ProblemError("grid needs at least 2 points per axis")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, int(self.nx))

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, int(self.nt))

    def replace(self, **changes) -> "GridSpec":
        values = dict(x_min=self.x_min, x_max=self.x_max, t_min=self.t_min,
                      t_max=self.t_max, nx=self.nx, nt=self.nt)
        values.update(changes)
        return GridSpec(**values)


@dataclass(frozen=True)
class OracleSpec:
    """Reference solution used for verification.

    ``explicit``: ``expression`` gives u(x, t).  ``implicit``: ``expression``
    is a relation g(x, t, u) that vanishes on the solution.  ``validity``,
    when given, must evaluate strictly positive (and finite) for a point to
    be compared.
    """

    kind: str
    expression: Optional[Expression] = None
    validity: Optional[Expression] = None

    def __post_init__(self):
        if self.kind not in ("explicit", "implicit", "none"):
            raise ProblemError(f"unknown oracle kind {self.kind!r}")
        allowed = {"x", "t"} if self.kind == "explicit" else {"x", "t", "u"}
        if self.kind != "none":
            if self.expression is None:
                raise ProblemError(f"{self.kind} oracle needs an expression")
            object.__setattr__(self, "expression", _as_expr(self.expression, allowed, "oracle"))
        if self.validity is not None:
            object.__setattr__(self, "validity", _as_expr(self.validity, {"x", "t", "u"}, "validity"))


NO_ORACLE = OracleSpec("none")
Spec = Union[ClassOneSpec, ClassTwoSpec]


@dataclass(frozen=True)
class ProblemCase:
    id: str
    cls: int
    spec: Spec
    initial: InitialData
    default_grid: GridSpec
    oracle: OracleSpec = field(default=NO_ORACLE)
    notes: str = ""
    # smaller, well-resolved window used by verification; None means default_grid
    check_grid: Optional[GridSpec] = None

    def __post_init__(self):
        expected = ClassOneSpec if self.cls == 1 else ClassTwoSpec
        if self.cls not in (1, 2) or not isinstance(self.spec, expected):
            raise ProblemError(f"class {self.cls} does not match {type(self.spec).__name__}")

    def with_grid(self, grid: GridSpec) -> "ProblemCase":
        return ProblemCase(self.id, self.cls, self.spec, self.initial, grid, self.oracle, self.notes,
                           self.check_grid)

    @property
    def verification_grid(self) -> GridSpec:
        return self.check_grid if self.check_grid is not None else self.default_grid


# ---------------------------------------------------------------- JSON

_RANGE = {
    "type": "array",
    "prefixItems": [{"type": "number"}, {"type": "number"}, {"type": "integer", "minimum": 2}],
    "minItems": 3,
    "maxItems": 3,
}
_EXPR = {"type": ["string", "number"]}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["id", "class", "a", "b", "t0", "u0", "ut0", "grid"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "class": {"enum": [1, 2]},
        "a": _EXPR,
        "b": _EXPR,
        "alpha": _EXPR,
        "G": _EXPR,
        "F": _EXPR,
        "m": {"type": "integer", "minimum": 0},
        "closure": {"enum": ["cubic"]},
        "t0": {"type": "number"},
        "u0": _EXPR,
        "ut0": _EXPR,
        "grid": {
            "type": "object",
            "required": ["x", "t"],
            "properties": {"x": _RANGE, "t": _RANGE},
            "additionalProperties": False,
        },
        "oracle": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["explicit", "implicit", "none"]},
                "expression": _EXPR,
                "validity": _EXPR,
            },
            "additionalProperties": False,
        },
    },
    "allOf": [
        {"if": {"properties": {"class": {"const": 1}}}, "then": {"required": ["alpha", "G"]}},
        {"if": {"properties": {"class": {"const": 2}}}, "then": {"required": ["F"]}},
    ],
    "additionalProperties": False,
}


def _field(doc: dict, key: str, allowed: set[str]) -> Expression:
    return _as_expr(doc[key], allowed, f"$.{key}")


def case_from_dict(doc: dict) -> ProblemCase:
    try:
        jsonschema.validate(doc, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p!r}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
        raise ProblemError(f"schema violation at {path}: {exc.message}") from None
    try:
        if doc["class"] == 1:
            spec = ClassOneSpec(
                a=_field(doc, "a", {"x", "t"}),
                b=_field(doc, "b", {"t"}),
                alpha=_field(doc, "alpha", {"x", "t"}),
                G=_field(doc, "G", {"u"}),
            )
        else:
            spec = ClassTwoSpec(
                a=_field(doc, "a", {"x", "t"}),
                b=_field(doc, "b", {"t"}),
                F=_field(doc, "F", {"s", "w"}),
                m=int(doc.get("m", 0)),
                closure=doc.get("closure"),
            )
        initial = InitialData(doc["t0"], _field(doc, "u0", {"x"}), _field(doc, "ut0", {"x"}))
        (x0, x1, nx), (t0, t1, nt) = doc["grid"]["x"], doc["grid"]["t"]
        grid = GridSpec(x0, x1, t0, t1, nx, nt)
        o = doc.get("oracle")
        oracle = NO_ORACLE if o is None else OracleSpec(o["kind"], o.get("expression"), o.get("validity"))
    except ProblemError as exc:
        if str(exc).startswith("$"):
            raise
        raise ProblemError(f"$: {exc}") from None
    return ProblemCase(doc["id"], doc["class"], spec, initial, grid, oracle)


def load_problem(document: str) -> ProblemCase:
    """Build a :class:`ProblemCase` from a JSON problem document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ProblemError("problem document must be a JSON object")
    return case_from_dict(doc)


def case_to_dict(case: ProblemCase) -> dict:
    s = case.spec
    doc = {"id": case.id, "class": case.cls, "a": ex.to_string(s.a), "b": ex.to_string(s.b)}
    if case.cls == 1:
        doc["alpha"] = ex.to_string(s.alpha)
        doc["G"] = ex.to_string(s.G)
    else:
        doc["F"] = ex.to_string(s.F)
        doc["m"] = s.m
        if s.closure:
            doc["closure"] = s.closure
    g = case.default_grid
    doc.update(
        t0=case.initial.t0,
        u0=ex.to_string(case.initial.u0),
        ut0=ex.to_string(case.initial.ut0),
        grid={"x": [g.x_min, g.x_max, int(g.nx)], "t": [g.t_min, g.t_max, int(g.nt)]},
    )
    if case.oracle.kind != "none":
        o = {"kind": case.oracle.kind, "expression": ex.to_string(case.oracle.expression)}
        if case.oracle.validity is not None:
            o["validity"] = ex.to_string(case.oracle.validity)
        doc["oracle"] = o
    return doc


# ---------------------------------------------------------------- registry

_E1_ARG = "sqrt(x)*exp(-t)*(-1 + exp(t)*(sqrt(x) - arcos(-sqrt(x)/sqrt(1+x)))/sqrt(x))"
_E2_DEN = "1 - t^3/3 + t^2*x - t*x^2"
_E3_DEN = ("exp(-t)*t^2 + exp(-t)*x^2 - 2*exp(-t)*t*x - 2*exp(-t)*x + 2*exp(-t)*t"
           " + 2*exp(-t) - x^2 + 2*x - 1")
_E7_REL = ("sqrt(2*exp(-2*u) - 1)*t - arctan(sqrt(2*exp(-2*u) - 1))*t"
           " - t*sqrt(2*exp(-2*x) - 1) + t*arctan(sqrt(2*exp(-2*x) - 1)) + t - 1")

_REGISTRY = {
    "E1": dict(
        cls=1, spec=dict(a="x", b="1", alpha="x*exp(-t)", G="2*u"),
        initial=(0.0, "1", "x + 1"), grid=(-10, 10, 0, 4), check=(0.1, 1, 0, 0.3, 201),
        oracle=OracleSpec("explicit", f"sqrt(x)*tan({_E1_ARG})", f"abs(cos({_E1_ARG})) - 0.05"),
        notes="Riccati after reduction; the closed form uses arcos, an accepted alias of arccos",
    ),
    "E2": dict(
        cls=2, spec=dict(a="1", b="0", F="w", m=0),
        initial=(0.0, "0", "x^2"), grid=(-2, 2, 0, 2), check=(0, 1, 0, 0.5, 201),
        oracle=OracleSpec("explicit", f"-ln({_E2_DEN})", _E2_DEN),
    ),
    "E3": dict(
        cls=2, spec=dict(a="1", b="1", F="w", m=0),
        initial=(0.0, "0", "x^2"), grid=(-2, 2, 0, 2), check=(-0.5, 1, 0, 0.5, 201),
        oracle=OracleSpec("explicit", f"-ln({_E3_DEN})", _E3_DEN),
    ),
    "E4": dict(
        cls=2, spec=dict(a="1", b="0", F="s", m=0),
        initial=(0.0, "0", "x^2"), grid=(-2, 2, 0, 2), check=(-1, 1, 0, 0.5, 201),
        notes="Riccati; no closed form, residual check only",
    ),
    "E5": dict(
        cls=2, spec=dict(a="x", b="0", F="s^2", m=0),
        initial=(0.0, "x", "x^3/3"), grid=(-1, 1, 0, 2), check=(-1, 1, 0, 0.5, 201),
        notes="Abel in form; K = u^3/3 on every characteristic, residual check only",
    ),
    "E6": dict(
        cls=2, spec=dict(a="1", b="1/t", F="(w/s)^2 + 2*(w/s)", m=0),
        initial=(1.0, "1", "x^2"), grid=(0, 1, 1, 2), check=(0.2, 0.6, 1, 1.5, 101),
        notes="implicit relation -A/u - ln u = ln t + B(x) is exact only when a = 0",
    ),
    "E7": dict(
        cls=2, spec=dict(a="1", b="2/t", F="w + w^3", m=0),
        initial=(1.0, "x", "1/sqrt(2*exp(-2*x) - 1)"), grid=(-1, 1, 1, 2), check=(-1, -0.4, 1, 2, 101),
        oracle=OracleSpec("implicit", _E7_REL, "2*exp(-2*x) - 1"),
        notes="initial slope is real only for x < ln(2)/2",
    ),
    "E8": dict(
        cls=2, spec=dict(a="1", b="-1/t", F="1 + 2*s/w", m=0, closure="cubic"),
        initial=(1.0, "1", "x^2"), grid=(1, 4, 1, 4), check=(1, 1.5, 1, 1.5, 201),
        notes="first integral (K - 2u)^2 (K + u) = A; u_t(x,1) = x^2",
    ),
}

BUILTIN_IDS = tuple(_REGISTRY)


def builtin_example(id: str) -> ProblemCase:
    """Return the built-in example ``id`` (``E1`` .. ``E8``)."""
    try:
        entry = _REGISTRY[id]
    except KeyError:
        raise ProblemError(f"unknown example {id!r}; known: {', '.join(BUILTIN_IDS)}") from None
    spec_cls = ClassOneSpec if entry["cls"] == 1 else ClassTwoSpec
    t0, u0, ut0 = entry["initial"]
    x0, x1, ta, tb = entry["grid"]
    return ProblemCase(
        id=id,
        cls=entry["cls"],
        spec=spec_cls(**entry["spec"]),
        initial=InitialData(t0, u0, ut0),
        default_grid=GridSpec(float(x0), float(x1), float(ta), float(tb)),
        oracle=entry.get("oracle", NO_ORACLE),
        notes=entry.get("notes", ""),
        check_grid=GridSpec(*map(float, entry["check"][:4]), entry["check"][4], entry["check"][4]),
    )
