"""Scalar expression trees: parsing, evaluation, differentiation, simplification.

Expressions are built over a fixed variable naming scheme: ``t``, ``x1`` ..
``xn`` and ``gamma``.  The grammar (EBNF) is::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | "+" unary | power ;
    power   = atom [ ("^" | "**") unary ] ;
    atom    = number | name | func "(" expr ")" | "(" expr ")" ;
    func    = "exp" | "ln" | "log" | "sin" | "cos" | "sqrt" ;
    number  = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;

``^`` binds tighter than unary minus (``-x^2`` is ``-(x^2)``) and is right
associative.  The exponent of a power must reduce to a constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence, Union

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "EvaluationError",
    "UnboundVariableError",
    "DomainError",
    "variables_for",
    "parse",
    "evaluate",
    "differentiate",
    "simplify",
    "to_string",
    "free_variables",
    "compile_expr",
    "compile_vector",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "apply",
]

UNARY_OPS = ("neg", "exp", "ln", "sin", "cos", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
FUNCTIONS = {"exp": "exp", "ln": "ln", "log": "ln", "sin": "sin", "cos": "cos", "sqrt": "sqrt"}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"{message} at offset {position}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, position: int):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at offset {position}")


class EvaluationError(ExprError):
    pass


class UnboundVariableError(EvaluationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"variable {name!r} is not bound")


class DomainError(EvaluationError):
    """Raised for ln/sqrt outside their domain, division by zero and overflow.

    ``node`` is the offending subexpression.
    """

    def __init__(self, message: str, node: "Expr"):
        self.node = node
        super().__init__(f"{message} in {to_string(node)!r}")


class Expr:
    """Immutable expression node.  Arithmetic operators build new trees."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, _lift(exponent))

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True, repr=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True, eq=True, repr=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True, repr=True)
class Unary(Expr):
    op: str
    arg: Expr


@dataclass(frozen=True, eq=True, repr=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


Number = Union[int, float]


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Const(value)
    raise TypeError(f"cannot use {type(value).__name__} in an expression")


def variables_for(n: int) -> tuple[str, ...]:
    """The declared variable set ``(t, x1, ..., xn, gamma)``."""
    if n < 1:
        raise ValueError("dimension n must be >= 1")
    return ("t",) + tuple(f"x{i}" for i in range(1, n + 1)) + ("gamma",)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if kind == "op" and text == "**":
                text = "^"
            tokens.append(_Token(kind, text, pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: Iterable[str]):
        self.source = source
        self.variables = frozenset(variables)
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.tok
        return ExprSyntaxError(message, tok.pos, self.source)

    def eat(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.eat(text):
            what = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise self.error(f"expected {text!r}, found {what}")

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            if self.eat("+"):
                e = Binary("add", e, self.term())
            elif self.eat("-"):
                e = Binary("sub", e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            if self.eat("*"):
                e = Binary("mul", e, self.unary())
            elif self.eat("/"):
                e = Binary("div", e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        if self.eat("-"):
            operand = self.unary()
            # a negated literal is a negative constant
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Unary("neg", operand)
        if self.eat("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            caret = self.tok
            self.i += 1
            exponent = simplify(self.unary())
            if not isinstance(exponent, Const):
                raise ExprSyntaxError("exponent must be a constant", caret.pos, self.source)
            return Binary("pow", base, exponent)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(FUNCTIONS[tok.text], arg)
            if tok.text not in self.variables:
                raise UnknownIdentifierError(tok.text, tok.pos)
            return Var(tok.text)
        if self.eat("("):
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {tok.text!r}")


def parse(source: str, variables: Iterable[str]) -> Expr:
    """Parse ``source`` into an expression over the given variable names.

    >>> to_string(parse("x2*exp(-2*x1)", ["t", "x1", "x2"]))
    'x2*exp(-2*x1)'
    """
    return _Parser(source, variables).parse()


# ---------------------------------------------------------------------------
# evaluation


def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """Evaluate ``e`` with strict real arithmetic.

    Domain violations raise :class:`DomainError` naming the offending node
    instead of producing NaN or infinity.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(point[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        a = evaluate(e.arg, point)
        op = e.op
        if op == "neg":
            return -a
        if op == "exp":
            try:
                return math.exp(a)
            except OverflowError:
                raise DomainError("overflow", e) from None
        if op == "ln":
            if a <= 0.0:
                raise DomainError(f"ln of non-positive argument {a!r}", e)
            return math.log(a)
        if op == "sqrt":
            if a < 0.0:
                raise DomainError(f"sqrt of negative argument {a!r}", e)
            return math.sqrt(a)
        if op == "sin":
            return math.sin(a)
        if op == "cos":
            return math.cos(a)
        raise ExprError(f"unknown unary op {op!r}")
    if isinstance(e, Binary):
        a = evaluate(e.left, point)
        b = evaluate(e.right, point)
        op = e.op
        if op == "add":
            r = a + b
        elif op == "sub":
            r = a - b
        elif op == "mul":
            r = a * b
        elif op == "div":
            if b == 0.0:
                raise DomainError("division by zero", e)
            r = a / b
        elif op == "pow":
            try:
                r = math.pow(a, b)
            except (ValueError, ZeroDivisionError):
                raise DomainError(f"power undefined for base {a!r}", e) from None
            except OverflowError:
                raise DomainError("overflow", e) from None
        else:
            raise ExprError(f"unknown binary op {op!r}")
        if not math.isfinite(r):
            raise DomainError("non-finite result", e)
        return r
    raise TypeError(f"not an expression: {e!r}")


def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Unary):
        return free_variables(e.arg)
    if isinstance(e, Binary):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset()


# ---------------------------------------------------------------------------
# smart constructors (local rewrites, used by simplify and differentiate)


def const(value: Number) -> Const:
    return Const(value)


def var(name: str) -> Var:
    return Var(name)


def _fold(e: Expr) -> Expr:
    try:
        return Const(evaluate(e, {}))
    except EvaluationError:
        return e


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Binary("add", a, b))
    if isinstance(b, Unary) and b.op == "neg":
        return sub(a, b.arg)
    if isinstance(b, Const) and b.value < 0:
        return Binary("sub", a, Const(-b.value))
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Binary("sub", a, b))
    if isinstance(b, Unary) and b.op == "neg":
        return add(a, b.arg)
    if a == b:
        return Const(0.0)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return Const(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Binary("mul", a, b))
    if isinstance(b, Const):
        a, b = b, a
    # c1*(c2*e) -> (c1*c2)*e
    if isinstance(a, Const) and isinstance(b, Binary) and b.op == "mul" and isinstance(b.left, Const):
        return mul(_fold(Binary("mul", a, b.left)), b.right)
    if isinstance(a, Unary) and a.op == "neg":
        return neg(mul(a.arg, b))
    if isinstance(b, Unary) and b.op == "neg":
        return neg(mul(a, b.arg))
    # pull constant factors to the front: a*(c*e) -> c*(a*e), (c*e)*b -> c*(e*b)
    if not isinstance(a, Const) and isinstance(b, Binary) and b.op == "mul" and isinstance(b.left, Const):
        return mul(b.left, mul(a, b.right))
    if not isinstance(a, Const) and isinstance(a, Binary) and a.op == "mul" and isinstance(a.left, Const):
        return mul(a.left, mul(a.right, b))
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return Const(0.0)
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Binary("div", a, b))
    return Binary("div", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    if isinstance(a, Binary) and a.op == "mul" and isinstance(a.left, Const):
        return mul(Const(-a.left.value), a.right)
    return Unary("neg", a)


def power(a: Expr, b: Expr) -> Expr:
    if not isinstance(b, Const):
        raise ExprError("exponent must be a constant")
    if b.value == 1.0:
        return a
    if b.value == 0.0:
        return Const(1.0)
    if isinstance(a, Const):
        return _fold(Binary("pow", a, b))
    return Binary("pow", a, b)


def apply(op: str, a: Expr) -> Expr:
    if op == "neg":
        return neg(a)
    if op not in UNARY_OPS:
        raise ExprError(f"unknown function {op!r}")
    if isinstance(a, Const):
        return _fold(Unary(op, a))
    return Unary(op, a)


_BUILDERS: dict[str, Callable[[Expr, Expr], Expr]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "pow": power,
}


def simplify(e: Expr) -> Expr:
    """Bottom-up local rewrites: annihilators, identities, constant folding."""
    if isinstance(e, Unary):
        return apply(e.op, simplify(e.arg))
    if isinstance(e, Binary):
        return _BUILDERS[e.op](simplify(e.left), simplify(e.right))
    return e


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expr, name: str) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to variable ``name``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == name else 0.0)
    if isinstance(e, Unary):
        a = e.arg
        da = differentiate(a, name)
        if _is(da, 0.0):
            return Const(0.0)
        op = e.op
        if op == "neg":
            return neg(da)
        if op == "exp":
            return mul(da, e)
        if op == "ln":
            return div(da, a)
        if op == "sin":
            return mul(da, apply("cos", a))
        if op == "cos":
            return neg(mul(da, apply("sin", a)))
        if op == "sqrt":
            return div(da, mul(Const(2.0), e))
        raise ExprError(f"unknown unary op {op!r}")
    if isinstance(e, Binary):
        a, b = e.left, e.right
        op = e.op
        if op == "pow":
            c = b.value  # type: ignore[union-attr]
            da = differentiate(a, name)
            if _is(da, 0.0):
                return Const(0.0)
            return mul(mul(Const(c), power(a, Const(c - 1.0))), da)
        da = differentiate(a, name)
        db = differentiate(b, name)
        if op == "add":
            return add(da, db)
        if op == "sub":
            return sub(da, db)
        if op == "mul":
            return add(mul(da, b), mul(a, db))
        if op == "div":
            if _is(db, 0.0):
                return div(da, b)
            return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
        raise ExprError(f"unknown binary op {op!r}")
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _num(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _prec(e: Expr) -> int:
    if isinstance(e, Const):
        return 5 if e.value >= 0 else 3
    if isinstance(e, Unary):
        return 3 if e.op == "neg" else 5
    if isinstance(e, Binary):
        return _PREC[e.op]
    return 5


def to_string(e: Expr) -> str:
    """Render ``e`` in the parser grammar; ``parse(to_string(e))`` is equivalent to ``e``."""
    if isinstance(e, Const):
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_string(e.arg)
            # -(c) would re-parse as a folded constant; keep structure readable either way
            if _prec(e.arg) < 4:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left = to_string(e.left)
        right = to_string(e.right)
        if e.op == "pow":
            if _prec(e.left) <= p:
                left = f"({left})"
            right = f"({right})" if isinstance(e.right, Const) and e.right.value < 0 else right
            return f"{left}^{right}"
        if _prec(e.left) < p:
            left = f"({left})"
        # left-associative: equal precedence on the right needs parentheses
        if _prec(e.right) < p or (_prec(e.right) == p and e.op in ("sub", "div", "add", "mul") and isinstance(e.right, Binary)):
            right = f"({right})"
        elif isinstance(e.right, Const) and e.right.value < 0:
            right = f"({right})"
        return f"{left}{_SYMBOL[e.op]}{right}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# compilation to fast Python callables

_PY_FUNC = {"exp": "_exp", "ln": "_ln", "sin": "_sin", "cos": "_cos", "sqrt": "_sqrt"}


def _py(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_py(e.arg)})"
        return f"{_PY_FUNC[e.op]}({_py(e.arg)})"
    if isinstance(e, Binary):
        if e.op == "pow":
            return f"_pow({_py(e.left)}, {_py(e.right)})"
        return f"({_py(e.left)} {_SYMBOL[e.op]} {_py(e.right)})"
    raise TypeError(f"not an expression: {e!r}")


def _ln(a):
    if a <= 0.0:
        raise ValueError("ln domain")
    return math.log(a)


_NAMESPACE = {
    "_exp": math.exp,
    "_ln": _ln,
    "_sin": math.sin,
    "_cos": math.cos,
    "_sqrt": math.sqrt,
    "_pow": math.pow,
}


def _signature(n: int) -> tuple[str, str]:
    names = [f"x{i}" for i in range(1, n + 1)]
    # plain floats: math raises where numpy scalars would only warn
    unpack = "    t = float(t)\n    gamma = float(gamma)\n"
    if names:
        unpack += f"    {', '.join(names)}, = map(float, x)\n"
    return "t, x, gamma=0.0", unpack


def compile_vector(exprs: Sequence[Expr], n: int) -> Callable[..., list]:
    """Compile expressions into ``f(t, x, gamma=0.0) -> list[float]``.

    The fast path uses ``math``; on any arithmetic failure the tree evaluator
    is re-run so the raised :class:`DomainError` names the offending node.
    """
    exprs = list(exprs)
    allowed = set(variables_for(n))
    for e in exprs:
        extra = free_variables(e) - allowed
        if extra:
            raise UnknownIdentifierError(sorted(extra)[0], -1)
    args, unpack = _signature(n)
    body = ", ".join(_py(e) for e in exprs)
    src = f"def _f({args}):\n{unpack}    return [{body}]\n"
    ns = dict(_NAMESPACE)
    exec(src, ns)
    fast = ns["_f"]
    names = variables_for(n)

    def f(t, x, gamma=0.0):
        try:
            out = fast(t, x, gamma)
        except (ValueError, ZeroDivisionError, OverflowError):
            point = dict(zip(names, (t, *x, gamma)))
            for e in exprs:
                evaluate(e, point)
            raise
        for v in out:
            if not math.isfinite(v):
                point = dict(zip(names, (t, *x, gamma)))
                for e in exprs:
                    evaluate(e, point)
                raise DomainError("non-finite result", exprs[0])
        return out

    f.exprs = exprs  # type: ignore[attr-defined]
    f.source = src  # type: ignore[attr-defined]
    return f


def compile_expr(e: Expr, n: int) -> Callable[..., float]:
    """Scalar counterpart of :func:`compile_vector`."""
    vec = compile_vector([e], n)

    def f(t, x, gamma=0.0):
        return vec(t, x, gamma)[0]

    f.expr = e  # type: ignore[attr-defined]
    return f
