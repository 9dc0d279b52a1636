"""Expression trees for scalar functions and vector-field components on R^m.

Grammar (whitespace is ignored)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' ['-'] integer)?
    primary := number | 'x' integer | '(' expr ')' | func primary
    func    := 'sin' | 'cos' | 'exp' | 'log'

Unary minus binds looser than ``^`` so ``-x1^2`` is ``-(x1^2)``. When the
ambient dimension is 1 a bare ``x`` is accepted as ``x1``.

Linear vector fields are stored so that ``eval_field`` returns ``A @ x``;
a matrix written in the row-vector convention ``x A`` must be transposed
before it is passed to :meth:`VectorFieldSpec.linear`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionError, DomainError, EvaluationError, ExprSyntaxError

# ---------------------------------------------------------------------------
# nodes


class ExprNode:
    """Base class for expression tree nodes. Trees are immutable."""

    precedence = 5

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Const(ExprNode):
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or math.copysign(1.0, self.value) < 0:
            raise DomainError(f"constants must be finite and non-negative, got {self.value!r}")


@dataclass(frozen=True)
class Var(ExprNode):
    index: int  # 1-based

    def __post_init__(self):
        if self.index < 1:
            raise DomainError(f"variable indices start at 1, got {self.index}")


@dataclass(frozen=True)
class Add(ExprNode):
    left: ExprNode
    right: ExprNode
    precedence = 1


@dataclass(frozen=True)
class Sub(ExprNode):
    left: ExprNode
    right: ExprNode
    precedence = 1


@dataclass(frozen=True)
class Mul(ExprNode):
    left: ExprNode
    right: ExprNode
    precedence = 2


@dataclass(frozen=True)
class Div(ExprNode):
    left: ExprNode
    right: ExprNode
    precedence = 2


@dataclass(frozen=True)
class Neg(ExprNode):
    operand: ExprNode
    precedence = 3


@dataclass(frozen=True)
class Pow(ExprNode):
    base: ExprNode
    exponent: int
    precedence = 4


FUNCTIONS = ("sin", "cos", "exp", "log")


@dataclass(frozen=True)
class Func(ExprNode):
    name: str
    arg: ExprNode

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise DomainError(f"unknown function {self.name!r}")


_BINARY_SYMBOLS = {Add: "+", Sub: "-", Mul: "*", Div: "/"}

# ---------------------------------------------------------------------------
# printing


def to_source(node: ExprNode) -> str:
    """Print ``node`` in the grammar accepted by :func:`parse_expr`.

    Parentheses are emitted only where needed, and ``parse_expr`` of the
    output rebuilds an equal tree.
    """
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Func):
        return f"{node.name}({to_source(node.arg)})"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, node.operand.precedence < 3)
    if isinstance(node, Pow):
        return f"{_wrap(node.base, node.base.precedence < 5)}^{node.exponent}"
    op = _BINARY_SYMBOLS[type(node)]
    p = node.precedence
    left = _wrap(node.left, node.left.precedence < p)
    right = _wrap(node.right, node.right.precedence <= p)
    return f"{left} {op} {right}"


def _wrap(node, paren):
    s = to_source(node)
    return f"({s})" if paren else s


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str  # number | var | func | op | end
    text: str
    line: int
    column: int
    value: object = None


def _tokenize(src: str, dim: int):
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        col = pos - line_start + 1
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "ws":
            nl = text.count("\n")
            if nl:
                line += nl
                line_start = pos + text.rfind("\n") + 1
        elif kind == "number":
            tokens.append(_Token("number", text, line, col, float(text)))
        elif kind == "name":
            tokens.append(_name_token(text, dim, line, col))
        else:
            tokens.append(_Token("op", text, line, col))
        pos = m.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


def _name_token(text, dim, line, col):
    if text in FUNCTIONS:
        return _Token("func", text, line, col)
    if text == "x" and dim == 1:
        return _Token("var", text, line, col, 1)
    m = re.fullmatch(r"x(\d+)", text)
    if m is None:
        raise ExprSyntaxError(f"unknown identifier {text!r}", line, col)
    index = int(m.group(1))
    if index < 1:
        raise ExprSyntaxError(f"unknown variable {text!r}: indices start at 1", line, col)
    if index > dim:
        raise ExprSyntaxError(f"variable index {index} exceeds dimension {dim}", line, col)
    return _Token("var", text, line, col, index)


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, message, tok=None):
        tok = tok or self.tok
        return ExprSyntaxError(message, tok.line, tok.column)

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while True:
            if self.accept("+"):
                node = Add(node, self.term())
            elif self.accept("-"):
                node = Sub(node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            if self.accept("*"):
                node = Mul(node, self.unary())
            elif self.accept("/"):
                node = Div(node, self.unary())
            else:
                return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if not self.accept("^"):
            return base
        negative = self.accept("-")
        tok = self.tok
        if tok.kind != "number" or not tok.text.isdigit():
            raise self.error("exponent must be an integer literal")
        self.i += 1
        k = int(tok.text)
        return Pow(base, -k if negative else k)

    def primary(self):
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return Const(tok.value)
        if tok.kind == "var":
            self.i += 1
            return Var(tok.value)
        if tok.kind == "func":
            self.i += 1
            return Func(tok.text, self.primary())
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}")


def parse_expr(src: str, dim: int) -> ExprNode:
    """Parse ``src`` into an expression tree over variables ``x1..x{dim}``."""
    if dim < 1:
        raise DimensionError(f"ambient dimension must be >= 1, got {dim}")
    return _Parser(_tokenize(src, dim)).parse()


def max_var_index(node: ExprNode) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Const):
        return 0
    return max(max_var_index(c) for c in _children(node))


def _children(node):
    if isinstance(node, (Add, Sub, Mul, Div)):
        return (node.left, node.right)
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, Func):
        return (node.arg,)
    return ()


# ---------------------------------------------------------------------------
# constant-folding constructors


def const(v: float) -> ExprNode:
    v = float(v) + 0.0  # drops the sign of -0.0
    return Neg(Const(-v)) if v < 0 else Const(v)


def _cv(node):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg) and isinstance(node.operand, Const):
        return -node.operand.value
    return None


def add(a, b):
    ca, cb = _cv(a), _cv(b)
    if ca is not None and cb is not None:
        return const(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    return Add(a, b)


def sub(a, b):
    ca, cb = _cv(a), _cv(b)
    if ca is not None and cb is not None:
        return const(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    ca, cb = _cv(a), _cv(b)
    if ca is not None and cb is not None:
        return const(ca * cb)
    if ca == 0 or cb == 0:
        return Const(0.0)
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return neg(b)
    if cb == -1:
        return neg(a)
    return Mul(a, b)


def div(a, b):
    ca, cb = _cv(a), _cv(b)
    if ca == 0:
        return Const(0.0)
    if cb == 1:
        return a
    if ca is not None and cb:
        return const(ca / cb)
    return Div(a, b)


def neg(a):
    ca = _cv(a)
    if ca is not None:
        return const(-ca)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def power(base, k: int):
    if k == 0:
        return Const(1.0)
    if k == 1:
        return base
    cb = _cv(base)
    if cb is not None and (cb != 0 or k > 0):
        return const(cb**k)
    return Pow(base, k)


# ---------------------------------------------------------------------------
# differentiation


def differentiate(node: ExprNode, index: int) -> ExprNode:
    """Symbolic partial derivative with respect to ``x{index}``."""
    d = lambda n: differentiate(n, index)  # noqa: E731
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.index == index else 0.0)
    if isinstance(node, Add):
        return add(d(node.left), d(node.right))
    if isinstance(node, Sub):
        return sub(d(node.left), d(node.right))
    if isinstance(node, Mul):
        u, v = node.left, node.right
        return add(mul(d(u), v), mul(u, d(v)))
    if isinstance(node, Div):
        u, v = node.left, node.right
        return div(sub(mul(d(u), v), mul(u, d(v))), power(v, 2))
    if isinstance(node, Neg):
        return neg(d(node.operand))
    if isinstance(node, Pow):
        k = node.exponent
        return mul(mul(const(k), power(node.base, k - 1)), d(node.base))
    if isinstance(node, Func):
        u = node.arg
        du = d(u)
        if node.name == "sin":
            outer = Func("cos", u)
        elif node.name == "cos":
            outer = neg(Func("sin", u))
        elif node.name == "exp":
            outer = node
        else:
            return div(du, u)
        return mul(outer, du)
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate(node: ExprNode, x: Sequence[float]) -> float:
    """Recursive evaluation with explicit domain checks.

    Slower than :func:`compile_expr`; used to locate the failing node.
    """
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(x[node.index - 1])
    if isinstance(node, Func):
        a = evaluate(node.arg, x)
        if node.name == "log" and a <= 0:
            raise EvaluationError(f"log of non-positive value {a!r}", to_source(node))
        try:
            r = getattr(math, node.name)(a)
        except OverflowError:
            raise EvaluationError("overflow", to_source(node)) from None
    elif isinstance(node, Neg):
        r = -evaluate(node.operand, x)
    elif isinstance(node, Pow):
        b = evaluate(node.base, x)
        if b == 0 and node.exponent < 0:
            raise EvaluationError("zero raised to a negative power", to_source(node))
        try:
            r = b**node.exponent
        except OverflowError:
            raise EvaluationError("overflow", to_source(node)) from None
    else:
        a = evaluate(node.left, x)
        b = evaluate(node.right, x)
        if isinstance(node, Add):
            r = a + b
        elif isinstance(node, Sub):
            r = a - b
        elif isinstance(node, Mul):
            r = a * b
        else:
            if b == 0:
                raise EvaluationError("division by zero", to_source(node))
            r = a / b
    if not math.isfinite(r):
        raise EvaluationError("non-finite result", to_source(node))
    return r


def _py_source(node):
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x[{node.index - 1}]"
    if isinstance(node, Func):
        return f"_{node.name}({_py_source(node.arg)})"
    if isinstance(node, Neg):
        return f"(-{_py_source(node.operand)})"
    if isinstance(node, Pow):
        return f"({_py_source(node.base)} ** {node.exponent})"
    op = _BINARY_SYMBOLS[type(node)]
    return f"({_py_source(node.left)} {op} {_py_source(node.right)})"


_NAMESPACE = {f"_{name}": getattr(math, name) for name in FUNCTIONS}


def compile_exprs(nodes: Sequence[ExprNode]) -> Callable[[Sequence[float]], tuple]:
    """Compile several trees into one function ``x -> tuple of floats``.

    Domain failures are re-raised as :class:`EvaluationError` naming the
    offending subexpression.
    """
    body = ", ".join(_py_source(n) for n in nodes)
    raw = eval(f"lambda x: ({body},)", dict(_NAMESPACE))  # trusted: generated from the tree

    def fn(x):
        try:
            out = raw(x)
        except (ValueError, ZeroDivisionError, OverflowError):
            out = None
        if out is None or not all(math.isfinite(v) for v in out):
            for n in nodes:
                evaluate(n, x)
            raise EvaluationError("non-finite result", None)
        return out

    return fn


def compile_expr(node: ExprNode) -> Callable[[Sequence[float]], float]:
    fn = compile_exprs([node])
    return lambda x: fn(x)[0]


# ---------------------------------------------------------------------------
# field specs


def _as_point(x, dim):
    arr = np.asarray(x, dtype=float)
    if arr.shape != (dim,):
        raise DimensionError(f"expected a point in R^{dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ScalarFieldSpec:
    """A smooth function R^m -> R given by an expression tree."""

    dim: int
    body: ExprNode

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError(f"ambient dimension must be >= 1, got {self.dim}")
        if max_var_index(self.body) > self.dim:
            raise DimensionError(
                f"expression references x{max_var_index(self.body)} but dimension is {self.dim}"
            )

    @classmethod
    def parse(cls, src: str, dim: int) -> "ScalarFieldSpec":
        return cls(dim, parse_expr(src, dim))

    @classmethod
    def constant(cls, value: float, dim: int) -> "ScalarFieldSpec":
        return cls(dim, const(value))

    def __str__(self):
        return to_source(self.body)

    @cached_property
    def gradient_exprs(self) -> tuple:
        return tuple(differentiate(self.body, j) for j in range(1, self.dim + 1))

    @cached_property
    def _value_fn(self):
        return compile_expr(self.body)

    @cached_property
    def _grad_fn(self):
        return compile_exprs(self.gradient_exprs)

    def value(self, x) -> float:
        return self._value_fn(x)

    def gradient(self, x) -> np.ndarray:
        return np.array(self._grad_fn(x))

    def shifted(self, c: float) -> "ScalarFieldSpec":
        """The function ``self - c``."""
        return ScalarFieldSpec(self.dim, sub(self.body, const(c)))

    def negated(self) -> "ScalarFieldSpec":
        return ScalarFieldSpec(self.dim, neg(self.body))


ScalarLike = Union[str, ExprNode, ScalarFieldSpec]


def as_scalar_field(f: ScalarLike, dim: int) -> ScalarFieldSpec:
    if isinstance(f, ScalarFieldSpec):
        if f.dim != dim:
            raise DimensionError(f"function lives on R^{f.dim}, expected R^{dim}")
        return f
    if isinstance(f, str):
        return ScalarFieldSpec.parse(f, dim)
    return ScalarFieldSpec(dim, f)


FIELD_KINDS = ("zero", "translation", "linear", "expression")


@dataclass(frozen=True, eq=False)
class VectorFieldSpec:
    """A vector field on R^m. Build instances with the classmethods."""

    dim: int
    kind: str
    direction: np.ndarray = None
    matrix: np.ndarray = None
    components: tuple = None

    @classmethod
    def zero(cls, dim: int) -> "VectorFieldSpec":
        if dim < 1:
            raise DimensionError(f"ambient dimension must be >= 1, got {dim}")
        return cls(dim, "zero")

    @classmethod
    def translation(cls, direction) -> "VectorFieldSpec":
        d = np.array(direction, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise DimensionError("translation direction must be a non-empty vector")
        if not np.all(np.isfinite(d)):
            raise DomainError("translation direction has non-finite entries")
        d.setflags(write=False)
        return cls(d.size, "translation", direction=d)

    @classmethod
    def coordinate(cls, dim: int, index: int) -> "VectorFieldSpec":
        """The field d/dx_index (1-based)."""
        if not 1 <= index <= dim:
            raise DimensionError(f"coordinate index {index} outside 1..{dim}")
        return cls.translation(np.eye(dim)[index - 1])

    @classmethod
    def linear(cls, matrix) -> "VectorFieldSpec":
        """The field ``x -> matrix @ x``."""
        from .linalg_core import as_matrix

        A = as_matrix(matrix, "linear field matrix")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"linear field matrix must be square, got {A.shape}")
        A.setflags(write=False)
        return cls(A.shape[0], "linear", matrix=A)

    @classmethod
    def expression(cls, components: Sequence[ScalarLike], dim: int = None) -> "VectorFieldSpec":
        dim = len(components) if dim is None else dim
        if len(components) != dim:
            raise DimensionError(f"expected {dim} components, got {len(components)}")
        comps = tuple(as_scalar_field(c, dim).body for c in components)
        return cls(dim, "expression", components=comps)

    @cached_property
    def function(self) -> Callable[[Sequence[float]], tuple]:
        """Fast evaluator ``x -> tuple`` for integrator inner loops."""
        if self.kind == "zero":
            zeros = (0.0,) * self.dim
            return lambda x: zeros
        if self.kind == "translation":
            d = tuple(self.direction.tolist())
            return lambda x: d
        if self.kind == "linear":
            rows = [tuple(r) for r in self.matrix.tolist()]
            return lambda x: tuple(sum(a * b for a, b in zip(r, x)) for r in rows)
        return compile_exprs(self.components)

    def __call__(self, x) -> np.ndarray:
        x = _as_point(x, self.dim)
        return np.array(self.function(x.tolist()), dtype=float)

    def __repr__(self):
        if self.kind == "translation":
            return f"VectorFieldSpec.translation({self.direction.tolist()})"
        if self.kind == "linear":
            return f"VectorFieldSpec.linear({self.matrix.tolist()})"
        if self.kind == "expression":
            return f"VectorFieldSpec.expression({[to_source(c) for c in self.components]})"
        return f"VectorFieldSpec.zero({self.dim})"


# ---------------------------------------------------------------------------
# module-level operations


def eval_scalar(f: ScalarFieldSpec, x) -> float:
    return f.value(_as_point(x, f.dim).tolist())


def grad(f: ScalarFieldSpec, x) -> np.ndarray:
    """Gradient from the symbolic partial derivatives."""
    return f.gradient(_as_point(x, f.dim).tolist())


def eval_field(F: VectorFieldSpec, x) -> np.ndarray:
    return F(x)


def directional_derivative(f: ScalarFieldSpec, F: VectorFieldSpec, x) -> float:
    """Derivative of ``f`` along ``F`` at ``x``: ``<F(x), grad f(x)>``."""
    if f.dim != F.dim:
        raise DimensionError(f"function on R^{f.dim} but field on R^{F.dim}")
    return float(np.dot(eval_field(F, x), grad(f, x)))
