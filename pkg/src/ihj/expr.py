"""Scalar expression DSL: parsing, evaluation and exact derivatives.

Expressions are small immutable ASTs over named real variables, built from
+, -, *, /, integer powers and the functions sin, cos, exp, ln, sqrt.
Derivatives come in two flavours:

* forward-mode jets (:func:`eval_jet1`, :func:`eval_jet2`) give exact
  gradients and Hessians at a point,
* :func:`differentiate` materialises the derivative as a new AST, for the
  few places where a constraint must itself remain a differentiable
  expression.

A central-difference oracle (:func:`finite_diff_grad`,
:func:`finite_diff_hess`) is provided for testing the jets against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Num", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "Expression", "ExprSyntaxError", "DomainError",
    "parse", "to_str", "evaluate", "free_vars",
    "Jet1", "Jet2", "eval_jet1", "eval_jet2",
    "finite_diff_grad", "finite_diff_hess",
    "differentiate", "substitute",
    "num", "var", "add", "sub", "mul", "div", "powi", "neg", "call",
]


class ExprSyntaxError(ValueError):
    """Raised on malformed input; carries 1-based line/column."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.col = col


class DomainError(ValueError):
    """Evaluation left the domain: ln of non-positive, sqrt of negative,
    division by zero, or a derivative at a non-differentiable point."""


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, Add, Sub, Mul, Div, Pow, Call]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


# --- smart constructors ----------------------------------------------------
#
# All programmatic AST construction goes through these.  They fold constants
# and keep a normal form in which Num values are non-negative (a negative
# constant is Neg(Num(...))), so canonical printing round-trips exactly.

def num(v: float) -> Node:
    v = float(v)
    if v < 0.0 or (v == 0.0 and math.copysign(1.0, v) < 0):
        return Neg(Num(-v))
    return Num(v)


def var(name: str) -> Node:
    return Var(name)


def _const(node: Node):
    """Return the constant value of a node, or None."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg) and isinstance(node.arg, Num):
        return -node.arg.value
    return None


def _is_zero(node: Node) -> bool:
    return _const(node) == 0.0


def add(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return num(ca + cb)
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if isinstance(b, Neg):
        return sub(a, b.arg)
    if isinstance(a, Neg):
        return sub(b, a.arg)
    return Add(a, b)


def sub(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return num(ca - cb)
    if _is_zero(b):
        return a
    if _is_zero(a):
        return neg(b)
    if a == b:
        return Num(0.0)
    return Sub(a, b)


def mul(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if ca is not None and cb is not None:
        return num(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return Num(0.0)
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    if ca == -1.0:
        return neg(b)
    if cb == -1.0:
        return neg(a)
    # pull nested constants together and to the front:
    # a * (c * x) -> (a*c) * x, x * (c * y) -> c * (x * y)
    if ca is not None and isinstance(b, Mul):
        cbl = _const(b.left)
        if cbl is not None:
            return mul(num(ca * cbl), b.right)
    if cb is not None and isinstance(a, Mul):
        cal = _const(a.left)
        if cal is not None:
            return mul(num(cb * cal), a.right)
    if ca is None and isinstance(b, Mul) and _const(b.left) is not None:
        return mul(b.left, mul(a, b.right))
    if cb is None and isinstance(a, Mul) and _const(a.left) is not None:
        return mul(a.left, mul(a.right, b))
    return Mul(a, b)


def div(a: Node, b: Node) -> Node:
    ca, cb = _const(a), _const(b)
    if cb is not None and cb != 0.0:
        if ca is not None:
            return num(ca / cb)
        if cb == 1.0:
            return a
        if cb == -1.0:
            return neg(a)
    if ca == 0.0 and not _is_zero(b):
        return Num(0.0)
    return Div(a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Neg):
        return a.arg
    c = _const(a)
    if c is not None:
        return num(-c)
    return Neg(a)


def powi(base: Node, k: int) -> Node:
    k = int(k)
    if k == 0:
        return Num(1.0)
    if k == 1:
        return base
    c = _const(base)
    if c is not None and (c != 0.0 or k > 0):
        return num(c ** k)
    return Pow(base, k)


def call(func: str, arg: Node) -> Node:
    if func not in FUNCTIONS:
        raise ValueError(f"unknown function {func!r}")
    c = _const(arg)
    if c is not None:
        try:
            v = _APPLY[func](c)
        except (ValueError, OverflowError):
            return Call(func, arg)
        return num(v)
    return Call(func, arg)


_APPLY = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "ln": lambda v: math.log(v) if v > 0 else (_ for _ in ()).throw(ValueError()),
    "sqrt": lambda v: math.sqrt(v) if v >= 0 else (_ for _ in ()).throw(ValueError()),
}


# --- Expression ------------------------------------------------------------

def free_vars(node: Node) -> tuple[str, ...]:
    """Variable names in order of first appearance."""
    seen: dict[str, None] = {}

    def walk(n: Node):
        if isinstance(n, Var):
            seen.setdefault(n.name)
        elif isinstance(n, Neg):
            walk(n.arg)
        elif isinstance(n, (Add, Sub, Mul, Div)):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Pow):
            walk(n.base)
        elif isinstance(n, Call):
            walk(n.arg)

    walk(node)
    return tuple(seen)


@dataclass(frozen=True)
class Expression:
    """An AST together with its free variables (in order of appearance)."""

    root: Node
    free_vars: tuple[str, ...]

    @classmethod
    def from_node(cls, node: Node) -> "Expression":
        return cls(node, free_vars(node))

    def eval(self, point: Mapping[str, float]) -> float:
        return evaluate(self.root, point)

    def jet1(self, point: Mapping[str, float], active: Sequence[str]) -> "Jet1":
        return eval_jet1(self, point, active)

    def jet2(self, point: Mapping[str, float], active: Sequence[str]) -> "Jet2":
        return eval_jet2(self, point, active)

    def diff(self, name: str) -> "Expression":
        return Expression.from_node(differentiate(self.root, name))

    def subs(self, mapping: Mapping[str, "Node | Expression | float"]) -> "Expression":
        return Expression.from_node(substitute(self.root, mapping))

    def __str__(self) -> str:
        return to_str(self.root)


# --- parser ----------------------------------------------------------------

_OPS = set("+-*/^()")


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1
        self.tokens: list[tuple[str, str, int, int]] = []
        self._scan()

    def _advance(self, n: int):
        for ch in self.text[self.pos:self.pos + n]:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n

    def _scan(self):
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch in " \t\r\n":
                self._advance(1)
                continue
            if ch == "#":
                end = text.find("\n", self.pos)
                self._advance((end if end >= 0 else len(text)) - self.pos)
                continue
            line, col = self.line, self.col
            if ch in _OPS:
                self.tokens.append(("op", ch, line, col))
                self._advance(1)
                continue
            if ch.isdigit() or (ch == "." and self.pos + 1 < len(text)
                                and text[self.pos + 1].isdigit()):
                j = self.pos
                while j < len(text) and text[j].isdigit():
                    j += 1
                if j < len(text) and text[j] == ".":
                    j += 1
                    while j < len(text) and text[j].isdigit():
                        j += 1
                if j < len(text) and text[j] in "eE":
                    k = j + 1
                    if k < len(text) and text[k] in "+-":
                        k += 1
                    if k < len(text) and text[k].isdigit():
                        j = k
                        while j < len(text) and text[j].isdigit():
                            j += 1
                lit = text[self.pos:j]
                self.tokens.append(("num", lit, line, col))
                self._advance(j - self.pos)
                continue
            if ch.isalpha():
                j = self.pos
                while j < len(text) and (text[j].isalnum()):
                    j += 1
                self.tokens.append(("ident", text[self.pos:j], line, col))
                self._advance(j - self.pos)
                continue
            raise ExprSyntaxError(f"unexpected character {ch!r}", line, col)
        self.tokens.append(("eof", "", self.line, self.col))


class _Parser:
    def __init__(self, text: str):
        self.tokens = _Tokenizer(text).tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok=None):
        kind, text, line, col = tok if tok is not None else self.peek()
        if kind == "eof" and self.i > 0:
            # point at the last real token rather than one past the end
            _, _, line, col = self.tokens[self.i - 1]
            raise ExprSyntaxError(f"{message} (unexpected end of input)", line, col)
        raise ExprSyntaxError(f"{message}, got {text!r}" if text else message, line, col)

    def expect(self, text: str):
        kind, t, line, col = self.peek()
        if kind != "op" or t != text:
            self.fail(f"expected {text!r}")
        return self.next()

    def parse(self) -> Node:
        node = self.expr()
        kind, t, line, col = self.peek()
        if kind != "eof":
            self.fail("unexpected trailing input")
        return node

    @staticmethod
    def _bin(op: str, a: Node, b: Node) -> Node:
        # fold constant subtrees so derived expressions print cleanly;
        # anything non-constant is kept verbatim
        if _const(a) is not None and _const(b) is not None:
            folded = {"+": add, "-": sub, "*": mul, "/": div}[op](a, b)
            if _const(folded) is not None:
                return folded
        return {"+": Add, "-": Sub, "*": Mul, "/": Div}[op](a, b)

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, t, _, _ = self.peek()
            if kind == "op" and t in "+-":
                self.next()
                node = self._bin(t, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            kind, t, _, _ = self.peek()
            if kind == "op" and t in "*/":
                self.next()
                node = self._bin(t, node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        node = self.atom()
        kind, t, _, _ = self.peek()
        if kind == "op" and t == "^":
            self.next()
            exponent = self.integer()
            if _const(node) is not None:
                folded = powi(node, exponent)
                if _const(folded) is not None:
                    return folded
            node = Pow(node, exponent)
        return node

    def integer(self) -> int:
        sign = 1
        kind, t, line, col = self.peek()
        if kind == "op" and t == "-":
            self.next()
            sign = -1
            kind, t, line, col = self.peek()
        if kind != "num":
            self.fail("non-integer exponent: expected integer literal")
        if any(c in t for c in ".eE"):
            self.fail("non-integer exponent")
        self.next()
        return sign * int(t)

    def atom(self) -> Node:
        kind, t, line, col = self.peek()
        if kind == "num":
            self.next()
            return Num(float(t))
        if kind == "ident":
            self.next()
            k2, t2, _, _ = self.peek()
            if k2 == "op" and t2 == "(":
                if t not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {t!r}", line, col)
                self.next()
                arg = self.expr()
                self.expect(")")
                return Call(t, arg)
            return Var(t)
        if kind == "op" and t == "(":
            self.next()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "op" and t == "-":
            self.next()
            return Neg(self.atom())
        self.fail("expected expression")


def parse(text: str) -> Expression:
    """Parse the DSL into an :class:`Expression`.

    Grammar: expr := term (('+'|'-') term)*; term := factor (('*'|'/')
    factor)*; factor := atom ('^' integer)?; atom := number | ident |
    ident '(' expr ')' | '(' expr ')' | '-' atom.  '#' comments to end of
    line; whitespace is insignificant.
    """
    return Expression.from_node(_Parser(text).parse())


# --- printing --------------------------------------------------------------

def _atomic(node: Node) -> bool:
    return isinstance(node, (Num, Var, Call))


def to_str(node: Node) -> str:
    """Canonical text form; re-parsing yields a structurally identical AST."""
    if isinstance(node, Num):
        v = node.value
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_str(node.arg)})"
    if isinstance(node, Neg):
        inner = to_str(node.arg)
        return f"-{inner}" if _atomic(node.arg) else f"-({inner})"
    if isinstance(node, Pow):
        base = to_str(node.base)
        if not _atomic(node.base):
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, (Mul, Div)):
        op = "*" if isinstance(node, Mul) else "/"
        left = to_str(node.left)
        if isinstance(node.left, (Add, Sub)):
            left = f"({left})"
        right = to_str(node.right)
        if isinstance(node.right, (Add, Sub, Mul, Div)):
            right = f"({right})"
        return f"{left} {op} {right}"
    if isinstance(node, (Add, Sub)):
        op = "+" if isinstance(node, Add) else "-"
        left = to_str(node.left)
        right = to_str(node.right)
        if isinstance(node.right, (Add, Sub)):
            right = f"({right})"
        return f"{left} {op} {right}"
    raise TypeError(f"not an AST node: {node!r}")


# --- plain evaluation ------------------------------------------------------

def evaluate(node: Node, point: Mapping[str, float]) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return float(point[node.name])
        except KeyError:
            raise DomainError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -evaluate(node.arg, point)
    if isinstance(node, Add):
        return evaluate(node.left, point) + evaluate(node.right, point)
    if isinstance(node, Sub):
        return evaluate(node.left, point) - evaluate(node.right, point)
    if isinstance(node, Mul):
        return evaluate(node.left, point) * evaluate(node.right, point)
    if isinstance(node, Div):
        d = evaluate(node.right, point)
        if d == 0.0:
            raise DomainError("division by zero")
        return evaluate(node.left, point) / d
    if isinstance(node, Pow):
        b = evaluate(node.base, point)
        if b == 0.0 and node.exponent < 0:
            raise DomainError("zero raised to a negative power")
        return b ** node.exponent
    if isinstance(node, Call):
        v = evaluate(node.arg, point)
        if node.func == "ln":
            if v <= 0.0:
                raise DomainError(f"ln of non-positive value {v}")
            return math.log(v)
        if node.func == "sqrt":
            if v < 0.0:
                raise DomainError(f"sqrt of negative value {v}")
            return math.sqrt(v)
        return _APPLY[node.func](v)
    raise TypeError(f"not an AST node: {node!r}")


# --- forward-mode jets -----------------------------------------------------

@dataclass(frozen=True)
class Jet1:
    """Value and gradient over an ordered active-variable set."""

    value: float
    grad: np.ndarray

    def __add__(self, o):
        return Jet1(self.value + o.value, self.grad + o.grad)

    def __sub__(self, o):
        return Jet1(self.value - o.value, self.grad - o.grad)

    def __neg__(self):
        return Jet1(-self.value, -self.grad)

    def __mul__(self, o):
        return Jet1(self.value * o.value,
                    self.value * o.grad + o.value * self.grad)

    def __truediv__(self, o):
        if o.value == 0.0:
            raise DomainError("division by zero")
        w = self.value / o.value
        return Jet1(w, (self.grad - w * o.grad) / o.value)


@dataclass(frozen=True)
class Jet2:
    """Second-order Taylor data: value, gradient and Hessian.

    The Hessian is stored as its packed upper triangle (row-major over
    i <= j), so asymmetry is unrepresentable; :attr:`hess` materialises
    the full symmetric matrix.
    """

    value: float
    grad: np.ndarray
    hpack: np.ndarray

    @property
    def dim(self) -> int:
        return self.grad.shape[0]

    @property
    def hess(self) -> np.ndarray:
        d = self.dim
        full = np.zeros((d, d))
        iu, ju = np.triu_indices(d)
        full[iu, ju] = self.hpack
        full[ju, iu] = self.hpack
        return full

    def __add__(self, o):
        return Jet2(self.value + o.value, self.grad + o.grad,
                    self.hpack + o.hpack)

    def __sub__(self, o):
        return Jet2(self.value - o.value, self.grad - o.grad,
                    self.hpack - o.hpack)

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hpack)

    def __mul__(self, o):
        return Jet2(self.value * o.value,
                    self.value * o.grad + o.value * self.grad,
                    self.value * o.hpack + o.value * self.hpack
                    + _sym_outer(self.grad, o.grad))

    def __truediv__(self, o):
        if o.value == 0.0:
            raise DomainError("division by zero")
        w = self.value / o.value
        gw = (self.grad - w * o.grad) / o.value
        hw = (self.hpack - w * o.hpack - _sym_outer(gw, o.grad)) / o.value
        return Jet2(w, gw, hw)


def _triu(d: int):
    return np.triu_indices(d)


def _sym_outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Packed upper triangle of u v^T + v u^T."""
    iu, ju = _triu(u.shape[0])
    return u[iu] * v[ju] + v[iu] * u[ju]


def _outer(u: np.ndarray) -> np.ndarray:
    """Packed upper triangle of u u^T."""
    iu, ju = _triu(u.shape[0])
    return u[iu] * u[ju]


def _jet2_const(v: float, d: int) -> Jet2:
    return Jet2(float(v), np.zeros(d), np.zeros(d * (d + 1) // 2))


def _jet1_const(v: float, d: int) -> Jet1:
    return Jet1(float(v), np.zeros(d))


def _chain1(j: Jet1, f, df) -> Jet1:
    return Jet1(f(j.value), df(j.value) * j.grad)


def _chain2(j: Jet2, f, df, d2f) -> Jet2:
    v, dv, d2v = f(j.value), df(j.value), d2f(j.value)
    return Jet2(v, dv * j.grad, dv * j.hpack + d2v * _outer(j.grad))


def _pow1(j: Jet1, k: int) -> Jet1:
    if k == 0:
        return _jet1_const(1.0, j.grad.shape[0])
    if j.value == 0.0 and k < 0:
        raise DomainError("zero raised to a negative power")
    v = j.value ** k
    dv = k * j.value ** (k - 1)
    return Jet1(v, dv * j.grad)


def _pow2(j: Jet2, k: int) -> Jet2:
    if k == 0:
        return _jet2_const(1.0, j.dim)
    if j.value == 0.0 and k < 0:
        raise DomainError("zero raised to a negative power")
    v = j.value ** k
    dv = k * j.value ** (k - 1)
    d2v = k * (k - 1) * (j.value ** (k - 2) if k != 1 else 0.0)
    return Jet2(v, dv * j.grad, dv * j.hpack + d2v * _outer(j.grad))


def _call_rules(func: str, v: float):
    if func == "sin":
        return math.sin, math.cos, lambda x: -math.sin(x)
    if func == "cos":
        return math.cos, lambda x: -math.sin(x), lambda x: -math.cos(x)
    if func == "exp":
        return math.exp, math.exp, math.exp
    if func == "ln":
        if v <= 0.0:
            raise DomainError(f"ln of non-positive value {v}")
        return math.log, lambda x: 1.0 / x, lambda x: -1.0 / (x * x)
    if func == "sqrt":
        if v <= 0.0:
            raise DomainError(f"sqrt derivative at non-positive value {v}")
        return (math.sqrt, lambda x: 0.5 / math.sqrt(x),
                lambda x: -0.25 / (x * math.sqrt(x)))
    raise ValueError(f"unknown function {func!r}")


def _as_root(e) -> Node:
    return e.root if isinstance(e, Expression) else e


def eval_jet1(e, point: Mapping[str, float], active: Sequence[str]) -> Jet1:
    """Value and exact gradient of ``e`` at ``point`` over ``active``."""
    root = _as_root(e)
    active = list(active)
    d = len(active)
    index = {name: i for i, name in enumerate(active)}

    def rec(n: Node) -> Jet1:
        if isinstance(n, Num):
            return _jet1_const(n.value, d)
        if isinstance(n, Var):
            try:
                v = float(point[n.name])
            except KeyError:
                raise DomainError(f"unbound variable {n.name!r}") from None
            g = np.zeros(d)
            i = index.get(n.name)
            if i is not None:
                g[i] = 1.0
            return Jet1(v, g)
        if isinstance(n, Neg):
            return -rec(n.arg)
        if isinstance(n, Add):
            return rec(n.left) + rec(n.right)
        if isinstance(n, Sub):
            return rec(n.left) - rec(n.right)
        if isinstance(n, Mul):
            return rec(n.left) * rec(n.right)
        if isinstance(n, Div):
            return rec(n.left) / rec(n.right)
        if isinstance(n, Pow):
            return _pow1(rec(n.base), n.exponent)
        if isinstance(n, Call):
            j = rec(n.arg)
            f, df, _ = _call_rules(n.func, j.value)
            return _chain1(j, f, df)
        raise TypeError(f"not an AST node: {n!r}")

    return rec(root)


def eval_jet2(e, point: Mapping[str, float], active: Sequence[str]) -> Jet2:
    """Value, exact gradient and exact Hessian over ``active``."""
    root = _as_root(e)
    active = list(active)
    d = len(active)
    npack = d * (d + 1) // 2
    index = {name: i for i, name in enumerate(active)}

    def rec(n: Node) -> Jet2:
        if isinstance(n, Num):
            return _jet2_const(n.value, d)
        if isinstance(n, Var):
            try:
                v = float(point[n.name])
            except KeyError:
                raise DomainError(f"unbound variable {n.name!r}") from None
            g = np.zeros(d)
            i = index.get(n.name)
            if i is not None:
                g[i] = 1.0
            return Jet2(v, g, np.zeros(npack))
        if isinstance(n, Neg):
            return -rec(n.arg)
        if isinstance(n, Add):
            return rec(n.left) + rec(n.right)
        if isinstance(n, Sub):
            return rec(n.left) - rec(n.right)
        if isinstance(n, Mul):
            return rec(n.left) * rec(n.right)
        if isinstance(n, Div):
            return rec(n.left) / rec(n.right)
        if isinstance(n, Pow):
            return _pow2(rec(n.base), n.exponent)
        if isinstance(n, Call):
            j = rec(n.arg)
            f, df, d2f = _call_rules(n.func, j.value)
            return _chain2(j, f, df, d2f)
        raise TypeError(f"not an AST node: {n!r}")

    return rec(root)


# --- finite-difference oracle ----------------------------------------------

def finite_diff_grad(e, x: Mapping[str, float], active: Sequence[str],
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient (e(x+h e_i) - e(x-h e_i)) / 2h."""
    if h <= 0:
        raise ValueError("h must be positive")
    root = _as_root(e)
    out = np.zeros(len(active))
    for i, name in enumerate(active):
        plus = dict(x)
        minus = dict(x)
        plus[name] = plus[name] + h
        minus[name] = minus[name] - h
        out[i] = (evaluate(root, plus) - evaluate(root, minus)) / (2 * h)
    return out


def finite_diff_hess(e, x: Mapping[str, float], active: Sequence[str],
                     h: float = 1e-4) -> np.ndarray:
    """Central second differences; h defaults larger than the gradient
    step because second differences lose ~eps/h^2 to round-off."""
    if h <= 0:
        raise ValueError("h must be positive")
    root = _as_root(e)
    d = len(active)
    out = np.zeros((d, d))
    f0 = evaluate(root, x)
    for i, ni in enumerate(active):
        pp = dict(x); pp[ni] += h
        mm = dict(x); mm[ni] -= h
        out[i, i] = (evaluate(root, pp) - 2 * f0 + evaluate(root, mm)) / h**2
        for j in range(i + 1, d):
            nj = active[j]
            a = dict(x); a[ni] += h; a[nj] += h
            b = dict(x); b[ni] += h; b[nj] -= h
            c = dict(x); c[ni] -= h; c[nj] += h
            e4 = dict(x); e4[ni] -= h; e4[nj] -= h
            val = (evaluate(root, a) - evaluate(root, b)
                   - evaluate(root, c) + evaluate(root, e4)) / (4 * h**2)
            out[i, j] = out[j, i] = val
    return out


# --- structural differentiation and substitution ----------------------------

def differentiate(node: Node, name: str) -> Node:
    """Exact derivative as a new AST, lightly simplified."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0) if node.name == name else Num(0.0)
    if isinstance(node, Neg):
        return neg(differentiate(node.arg, name))
    if isinstance(node, Add):
        return add(differentiate(node.left, name), differentiate(node.right, name))
    if isinstance(node, Sub):
        return sub(differentiate(node.left, name), differentiate(node.right, name))
    if isinstance(node, Mul):
        return add(mul(differentiate(node.left, name), node.right),
                   mul(node.left, differentiate(node.right, name)))
    if isinstance(node, Div):
        du = differentiate(node.left, name)
        dv = differentiate(node.right, name)
        return div(sub(mul(du, node.right), mul(node.left, dv)),
                   powi(node.right, 2))
    if isinstance(node, Pow):
        db = differentiate(node.base, name)
        return mul(mul(num(node.exponent), powi(node.base, node.exponent - 1)), db)
    if isinstance(node, Call):
        da = differentiate(node.arg, name)
        a = node.arg
        if node.func == "sin":
            outer = call("cos", a)
        elif node.func == "cos":
            outer = neg(call("sin", a))
        elif node.func == "exp":
            outer = call("exp", a)
        elif node.func == "ln":
            outer = div(Num(1.0), a)
        elif node.func == "sqrt":
            outer = div(Num(1.0), mul(Num(2.0), call("sqrt", a)))
        else:
            raise ValueError(f"unknown function {node.func!r}")
        return mul(outer, da)
    raise TypeError(f"not an AST node: {node!r}")


def substitute(node: Node, mapping: Mapping[str, "Node | Expression | float"]) -> Node:
    """Replace variables by sub-expressions, rebuilding through the
    simplifying constructors."""
    repl: dict[str, Node] = {}
    for k, v in mapping.items():
        if isinstance(v, Expression):
            repl[k] = v.root
        elif isinstance(v, (int, float)):
            repl[k] = num(v)
        else:
            repl[k] = v

    def rec(n: Node) -> Node:
        if isinstance(n, Num):
            return n
        if isinstance(n, Var):
            return repl.get(n.name, n)
        if isinstance(n, Neg):
            return neg(rec(n.arg))
        if isinstance(n, Add):
            return add(rec(n.left), rec(n.right))
        if isinstance(n, Sub):
            return sub(rec(n.left), rec(n.right))
        if isinstance(n, Mul):
            return mul(rec(n.left), rec(n.right))
        if isinstance(n, Div):
            return div(rec(n.left), rec(n.right))
        if isinstance(n, Pow):
            return powi(rec(n.base), n.exponent)
        if isinstance(n, Call):
            return call(n.func, rec(n.arg))
        raise TypeError(f"not an AST node: {n!r}")

    return rec(node)
