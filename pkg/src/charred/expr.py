"""Arithmetic expressions over the variables x, t, u, s, w.

Expressions are parsed into small immutable trees that can be evaluated
(scalar, with explicit domain checking, or vectorized over numpy arrays),
differentiated symbolically and inspected for polynomial structure.

Grammar (highest precedence last)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | "+" unary | power
    power   := primary ("^" unary)?
    primary := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

``^`` is right associative and binds tighter than unary minus, so
``-x^2`` is ``-(x^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

VARIABLES = ("x", "t", "u", "s", "w")
FUNCTIONS = ("exp", "ln", "sqrt", "sin", "cos", "tan", "arctan", "arccos", "abs")
FUNCTION_ALIASES = {"arcos": "arccos", "log": "ln", "atan": "arctan", "acos": "arccos"}
NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}


class ExpressionError(ValueError):
    """Base class for expression failures."""


class ParseError(ExpressionError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnboundVariableError(ExpressionError):
    pass


class DomainError(ArithmeticError):
    """Raised when a node is evaluated outside its real domain."""

    def __init__(self, message: str, node: "Expression"):
        super().__init__(f"{message} in {to_string(node)}")
        self.node = node


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a function name
    child: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


Expression = Union[Const, Var, Unary, Binary]


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Expression:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Unary("neg", self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Expression:
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                name = FUNCTION_ALIASES.get(val, val)
                if name not in FUNCTIONS:
                    raise ParseError(f"unknown function {val!r}", pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(name, arg)
            if val in VARIABLES:
                return Var(val)
            if val in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[val])
            raise ParseError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", pos)


def parse(text: str) -> Expression:
    """Parse ``text`` into an expression tree."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


def variables(e: Expression) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Unary):
        return variables(e.child)
    return variables(e.left) | variables(e.right)


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expression) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    if isinstance(e, Const) and e.value < 0:
        return _PREC["neg"]
    return 5


def _fmt_const(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expression, names: Mapping[str, str] | None = None) -> str:
    """Render ``e`` with the minimum parentheses needed to parse back.

    ``names`` optionally renames variables for display.
    """
    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return names.get(e.name, e.name) if names else e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            child = to_string(e.child, names)
            if _prec(e.child) < _PREC["neg"]:
                child = f"({child})"
            return f"-{child}"
        return f"{e.op}({to_string(e.child, names)})"
    p = _PREC[e.op]
    left, right = to_string(e.left, names), to_string(e.right, names)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------- evaluation

def _pow(base: float, exponent: float, node: Expression) -> float:
    if base < 0 and exponent != int(exponent):
        raise DomainError("non-integer power of negative base", node)
    if base == 0 and exponent < 0:
        raise DomainError("division by zero", node)
    try:
        return math.pow(base, exponent)
    except OverflowError:
        return math.copysign(math.inf, base) if exponent == int(exponent) and int(exponent) % 2 else math.inf


def _exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def _unary(op: str, v: float, node: Expression) -> float:
    if op == "neg":
        return -v
    if op == "exp":
        return _exp(v)
    if op == "ln":
        if v <= 0:
            raise DomainError("logarithm of non-positive value", node)
        return math.log(v)
    if op == "sqrt":
        if v < 0:
            raise DomainError("square root of negative value", node)
        return math.sqrt(v)
    if op == "arccos":
        if not -1.0 <= v <= 1.0:
            raise DomainError("arccos argument outside [-1, 1]", node)
        return math.acos(v)
    if op == "abs":
        return abs(v)
    return getattr(math, {"arctan": "atan"}.get(op, op))(v)


def evaluate(e: Expression, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision.

    Raises :class:`UnboundVariableError` for missing bindings and
    :class:`DomainError` (carrying the offending node) when a real-valued
    operation leaves its domain.  Overflow yields a signed infinity, which
    callers treat as divergence.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Unary):
        return _unary(e.op, evaluate(e.child, bindings), e)
    a = evaluate(e.left, bindings)
    b = evaluate(e.right, bindings)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if b == 0:
            raise DomainError("division by zero", e)
        return a / b
    return _pow(a, b, e)


# Vectorized evaluation: domain violations become NaN, overflow stays inf.

def _v_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b == 0, np.nan, a / np.where(b == 0, 1.0, b))


def _v_pow(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    bad = ((a < 0) & (b != np.round(b))) | ((a == 0) & (b < 0))
    with np.errstate(all="ignore"):
        out = np.power(np.where(bad, 1.0, a), b)
    return np.where(bad, np.nan, out)


def _v_ln(a):
    with np.errstate(all="ignore"):
        return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)


def _v_sqrt(a):
    with np.errstate(all="ignore"):
        return np.where(a >= 0, np.sqrt(np.abs(a)), np.nan)


def _v_arccos(a):
    ok = (a >= -1.0) & (a <= 1.0)
    return np.where(ok, np.arccos(np.clip(a, -1.0, 1.0)), np.nan)


def _v_exp(a):
    with np.errstate(over="ignore"):
        return np.exp(a)


_V_FUNCS = {
    "exp": _v_exp, "ln": _v_ln, "sqrt": _v_sqrt, "sin": np.sin, "cos": np.cos,
    "tan": np.tan, "arctan": np.arctan, "arccos": _v_arccos, "abs": np.abs,
    "_div": _v_div, "_pow": _v_pow,
}


def _source(e: Expression) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_source(e.child)})"
        return f"{e.op}({_source(e.child)})"
    a, b = _source(e.left), _source(e.right)
    if e.op == "/":
        return f"_div({a}, {b})"
    if e.op == "^":
        if isinstance(e.right, Const) and e.right.value in (1.0, 2.0, 3.0):
            return "*".join([f"({a})"] * int(e.right.value))
        return f"_pow({a}, {b})"
    return f"({a} {e.op} {b})"


def compile_numpy(e: Expression, args: tuple[str, ...] = VARIABLES) -> Callable[..., np.ndarray]:
    """Compile ``e`` to a vectorized function of the named ``args``.

    Domain violations produce NaN entries; the result always has the
    broadcast shape of the arguments.
    """
    missing = variables(e) - set(args)
    if missing:
        raise UnboundVariableError(f"variables {sorted(missing)} are not arguments")
    body = _source(e)
    src = f"def _f({', '.join(args)}):\n    return {body}\n"
    namespace = dict(_V_FUNCS)
    exec(compile(src, f"<expr {to_string(e)}>", "exec"), namespace)
    raw = namespace["_f"]

    def f(*values):
        arrays = np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in values]) if values else ()
        with np.errstate(all="ignore"):
            out = raw(*arrays)
        shape = arrays[0].shape if arrays else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else np.asarray(out, float)

    return f


# ---------------------------------------------------------------- algebra

def _is(e: Expression, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def _fold(e: Expression) -> Expression:
    """Collapse a subtree that contains no variables into a constant."""
    if isinstance(e, (Const, Var)) or variables(e):
        return e
    try:
        v = evaluate(e, {})
    except DomainError:
        return e
    return Const(v) if math.isfinite(v) else e


def add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return _fold(Binary("+", a, b))


def sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    return _fold(Binary("-", a, b))


def mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return Const(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return _fold(Binary("*", a, b))


def div(a, b):
    if _is(a, 0) and not _is(b, 0):
        return Const(0.0)
    if _is(b, 1):
        return a
    return _fold(Binary("/", a, b))


def power(a, b):
    if _is(b, 1):
        return a
    if _is(b, 0):
        return Const(1.0)
    return _fold(Binary("^", a, b))


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.child
    return Unary("neg", a)


def func(name, a):
    return _fold(Unary(name, a))


def differentiate(e: Expression, var: str) -> Expression:
    """Symbolic derivative of ``e`` with respect to ``var``."""
    if var not in VARIABLES:
        raise ExpressionError(f"unknown variable {var!r}")
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if isinstance(e, Unary):
        g = e.child
        dg = differentiate(g, var)
        if _is(dg, 0):
            return Const(0.0)
        op = e.op
        if op == "neg":
            return neg(dg)
        if op == "exp":
            outer = e
        elif op == "ln":
            outer = div(Const(1.0), g)
        elif op == "sqrt":
            outer = div(Const(0.5), e)
        elif op == "sin":
            outer = func("cos", g)
        elif op == "cos":
            outer = neg(func("sin", g))
        elif op == "tan":
            outer = add(Const(1.0), power(e, Const(2.0)))
        elif op == "arctan":
            outer = div(Const(1.0), add(Const(1.0), power(g, Const(2.0))))
        elif op == "arccos":
            outer = neg(div(Const(1.0), func("sqrt", sub(Const(1.0), power(g, Const(2.0))))))
        elif op == "abs":
            outer = div(g, e)
        else:  # pragma: no cover - parser guarantees the op set
            raise ExpressionError(f"cannot differentiate {op}")
        return mul(outer, dg)
    a, b = e.left, e.right
    da, db = differentiate(a, var), differentiate(b, var)
    if e.op == "+":
        return add(da, db)
    if e.op == "-":
        return sub(da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    if e.op == "/":
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    # power rule
    if _is(db, 0):
        return mul(mul(b, power(a, sub(b, Const(1.0)))), da)
    return mul(e, add(mul(db, func("ln", a)), div(mul(b, da), a)))


def _poly_add(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0.0) + (q[i] if i < len(q) else 0.0) for i in range(n)]


def _poly_mul(p, q):
    out = [0.0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _poly(e: Expression, var: str):
    if isinstance(e, Const):
        return [e.value]
    if isinstance(e, Var):
        return [0.0, 1.0] if e.name == var else None
    if not variables(e):
        folded = _fold(e)
        return [folded.value] if isinstance(folded, Const) else None
    if isinstance(e, Unary):
        if e.op != "neg":
            return None
        p = _poly(e.child, var)
        return None if p is None else [-c for c in p]
    p, q = _poly(e.left, var), _poly(e.right, var)
    if e.op in "+-":
        if p is None or q is None:
            return None
        return _poly_add(p, q if e.op == "+" else [-c for c in q])
    if e.op == "*":
        return None if p is None or q is None else _poly_mul(p, q)
    if e.op == "/":
        if p is None or q is None or len(_trim(q)) != 1 or _trim(q)[0] == 0:
            return None
        return [c / q[0] for c in p]
    # "^" needs a constant non-negative integer exponent
    if p is None or q is None:
        return None
    q = _trim(q)
    if len(q) != 1 or q[0] < 0 or q[0] != int(q[0]):
        return None
    out = [1.0]
    for _ in range(int(q[0])):
        out = _poly_mul(out, p)
    return out


def _trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def polynomial_profile(e: Expression, var: str) -> tuple[int, list[float]] | None:
    """Return ``(degree, ascending coefficients)`` if ``e`` is a polynomial in
    ``var`` alone, else ``None``."""
    p = _poly(e, var)
    if p is None:
        return None
    p = _trim(p)
    return len(p) - 1, p
