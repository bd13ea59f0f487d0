"""Radial profile expressions with exact derivatives.

Metric coefficients are scalar functions of the coordinate radius ``r``,
written in a small arithmetic grammar: numbers, the identifier ``r``, named
parameters, ``+ - * / ^``, parentheses, and the functions ``sqrt``, ``exp``,
``log``. Expressions are parsed to a tree, differentiated symbolically (so
first and second derivatives are exact, not finite differences), and
compiled to flat stack programs executed by the kernel backend over whole
arrays of radii at once.

The tree supports Python operators, so derived coefficients can be built
algebraically: for a conformal factor ``u`` the lapse is ``u**2`` and the
areal coefficient ``u**2 * VAR_R``, both inheriting exact derivatives.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ._kernels import eval_program
from ._kernels import ops as _ops

__all__ = [
    "EvaluationError",
    "ExpressionError",
    "Expr",
    "ProfileExpression",
    "VAR_R",
    "parse",
    "parse_radial_expression",
]


class ExpressionError(ValueError):
    """Malformed expression source; carries the offending position."""

    def __init__(self, message: str, position: Optional[int] = None):
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)
        self.position = position


class EvaluationError(ArithmeticError):
    """Domain violation while evaluating a profile, with the offending r."""

    def __init__(self, message: str, r: float):
        super().__init__(f"{message} at r = {r!r}")
        self.r = r


def _wrap(value: Union["Expr", float, int]) -> "Expr":
    if isinstance(value, Expr):
        return value
    return Num(float(value))


class Expr:
    """Base node. Subclasses are immutable and hashable."""

    def diff(self) -> "Expr":
        raise NotImplementedError

    def bind(self, parameters: dict) -> "Expr":
        return self

    def simplified(self) -> "Expr":
        return self

    def free_parameters(self) -> set:
        out: set = set()
        self._collect_parameters(out)
        return out

    def _collect_parameters(self, out: set) -> None:
        pass

    def eval_scalar(self, x: float) -> float:
        """Slow evaluation of one point, raising EvaluationError precisely.

        Used to diagnose non-finite results from the vectorized path.
        """
        raise NotImplementedError

    def to_source(self) -> str:
        raise NotImplementedError

    def __add__(self, other):
        return _add(self, _wrap(other))

    def __radd__(self, other):
        return _add(_wrap(other), self)

    def __sub__(self, other):
        return _sub(self, _wrap(other))

    def __rsub__(self, other):
        return _sub(_wrap(other), self)

    def __mul__(self, other):
        return _mul(self, _wrap(other))

    def __rmul__(self, other):
        return _mul(_wrap(other), self)

    def __truediv__(self, other):
        return _div(self, _wrap(other))

    def __rtruediv__(self, other):
        return _div(_wrap(other), self)

    def __pow__(self, other):
        return _pow(self, _wrap(other))

    def __neg__(self):
        return _neg(self)

    def __repr__(self):
        return f"{type(self).__name__}({self.to_source()})"


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def diff(self):
        return Num(0.0)

    def eval_scalar(self, x):
        return self.value

    def to_source(self):
        v = self.value
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def diff(self):
        return Num(1.0)

    def eval_scalar(self, x):
        return x

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class Param(Expr):
    name: str

    def diff(self):
        # Parameters are constants of the radial coordinate.
        return Num(0.0)

    def bind(self, parameters):
        if self.name not in parameters:
            raise ExpressionError(f"unbound parameter {self.name!r}")
        return Num(float(parameters[self.name]))

    def _collect_parameters(self, out):
        out.add(self.name)

    def eval_scalar(self, x):
        raise ExpressionError(f"unbound parameter {self.name!r}")

    def to_source(self):
        return self.name


@dataclass(frozen=True)
class _BinOp(Expr):
    left: Expr
    right: Expr

    op = "?"

    def bind(self, parameters):
        return type(self)(self.left.bind(parameters), self.right.bind(parameters))

    def _collect_parameters(self, out):
        self.left._collect_parameters(out)
        self.right._collect_parameters(out)

    def to_source(self):
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"


class Add(_BinOp):
    op = "+"

    def diff(self):
        return _add(self.left.diff(), self.right.diff())

    def simplified(self):
        return _add(self.left.simplified(), self.right.simplified())

    def eval_scalar(self, x):
        return self.left.eval_scalar(x) + self.right.eval_scalar(x)


class Sub(_BinOp):
    op = "-"

    def diff(self):
        return _sub(self.left.diff(), self.right.diff())

    def simplified(self):
        return _sub(self.left.simplified(), self.right.simplified())

    def eval_scalar(self, x):
        return self.left.eval_scalar(x) - self.right.eval_scalar(x)


class Mul(_BinOp):
    op = "*"

    def diff(self):
        return _add(
            _mul(self.left.diff(), self.right),
            _mul(self.left, self.right.diff()),
        )

    def simplified(self):
        return _mul(self.left.simplified(), self.right.simplified())

    def eval_scalar(self, x):
        try:
            v = self.left.eval_scalar(x) * self.right.eval_scalar(x)
        except OverflowError:
            raise EvaluationError(f"overflow in {self.to_source()}", x) from None
        return v


class Div(_BinOp):
    op = "/"

    def diff(self):
        num = _sub(
            _mul(self.left.diff(), self.right),
            _mul(self.left, self.right.diff()),
        )
        return _div(num, _pow(self.right, Num(2.0)))

    def simplified(self):
        return _div(self.left.simplified(), self.right.simplified())

    def eval_scalar(self, x):
        denom = self.right.eval_scalar(x)
        if denom == 0.0:
            raise EvaluationError(f"division by zero in {self.to_source()}", x)
        return self.left.eval_scalar(x) / denom


class Pow(_BinOp):
    op = "^"

    def diff(self):
        base, expo = self.left, self.right
        if isinstance(expo, Num):
            return _mul(
                _mul(expo, _pow(base, Num(expo.value - 1.0))),
                base.diff(),
            )
        # General case through exp/log; base must be positive at evaluation.
        return _mul(
            self,
            _add(
                _mul(expo.diff(), Func("log", base)),
                _div(_mul(expo, base.diff()), base),
            ),
        )

    def simplified(self):
        return _pow(self.left.simplified(), self.right.simplified())

    def eval_scalar(self, x):
        base = self.left.eval_scalar(x)
        expo = self.right.eval_scalar(x)
        if base < 0.0 and expo != int(expo):
            raise EvaluationError(
                f"negative base with fractional exponent in {self.to_source()}", x
            )
        if base == 0.0 and expo < 0.0:
            raise EvaluationError(f"zero base with negative exponent in {self.to_source()}", x)
        try:
            return base**expo
        except OverflowError:
            raise EvaluationError(f"overflow in {self.to_source()}", x) from None


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def diff(self):
        return _neg(self.operand.diff())

    def bind(self, parameters):
        return Neg(self.operand.bind(parameters))

    def simplified(self):
        return _neg(self.operand.simplified())

    def _collect_parameters(self, out):
        self.operand._collect_parameters(out)

    def eval_scalar(self, x):
        return -self.operand.eval_scalar(x)

    def to_source(self):
        return f"(-{self.operand.to_source()})"


_FUNCTION_NAMES = ("sqrt", "exp", "log")


@dataclass(frozen=True)
class Func(Expr):
    name: str
    operand: Expr

    def diff(self):
        f, df = self.operand, self.operand.diff()
        if self.name == "sqrt":
            return _div(df, _mul(Num(2.0), Func("sqrt", f)))
        if self.name == "exp":
            return _mul(df, Func("exp", f))
        if self.name == "log":
            return _div(df, f)
        raise ExpressionError(f"unknown function {self.name!r}")

    def bind(self, parameters):
        return Func(self.name, self.operand.bind(parameters))

    def simplified(self):
        inner = self.operand.simplified()
        if isinstance(inner, Num):
            return Num(self._apply(inner.value, r_hint=math.nan))
        return Func(self.name, inner)

    def _collect_parameters(self, out):
        self.operand._collect_parameters(out)

    def _apply(self, v: float, r_hint: float) -> float:
        if self.name == "sqrt":
            if v < 0.0:
                raise EvaluationError(f"sqrt of negative argument in {self.to_source()}", r_hint)
            return math.sqrt(v)
        if self.name == "exp":
            try:
                return math.exp(v)
            except OverflowError:
                raise EvaluationError(f"overflow in {self.to_source()}", r_hint) from None
        if self.name == "log":
            if v <= 0.0:
                raise EvaluationError(f"log of nonpositive argument in {self.to_source()}", r_hint)
            return math.log(v)
        raise ExpressionError(f"unknown function {self.name!r}")

    def eval_scalar(self, x):
        return self._apply(self.operand.eval_scalar(x), r_hint=x)

    def to_source(self):
        return f"{self.name}({self.operand.to_source()})"


VAR_R = Var("r")


def _is_num(e: Expr, value: Optional[float] = None) -> bool:
    return isinstance(e, Num) and (value is None or e.value == value)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 1.0):
        return a
    if _is_num(a, 0.0) and not _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a) and _is_num(b) and b.value != 0.0:
        return Num(a.value / b.value)
    return Div(a, b)


def _pow(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return Num(1.0)
    if _is_num(a) and _is_num(b):
        base, expo = a.value, b.value
        if base > 0.0 or expo == int(expo):
            return Num(base**expo)
    return Pow(a, b)


def _neg(a: Expr) -> Expr:
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            tail = source[pos:].lstrip()
            if not tail:
                break
            raise ExpressionError(f"unexpected character {tail[0]!r}", position=pos)
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect_op(self, symbol: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != symbol:
            raise ExpressionError(f"expected {symbol!r}, found {text or 'end of input'!r}", pos)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.expression()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {text!r}", pos)
        return expr

    def expression(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if text == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul(node, rhs) if text == "*" else Div(node, rhs)
            else:
                return node

    def factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        if kind == "op" and text == "+":
            self.advance()
            return self.factor()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            # Right associative; the exponent may carry its own sign.
            return Pow(base, self.factor())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "number":
            return Num(float(text))
        if kind == "name":
            nkind, ntext, _ = self.peek()
            if nkind == "op" and ntext == "(":
                if text not in _FUNCTION_NAMES:
                    raise ExpressionError(f"unknown function {text!r}", pos)
                self.advance()
                arg = self.expression()
                self.expect_op(")")
                return Func(text, arg)
            if text == "r":
                return VAR_R
            return Param(text)
        if kind == "op" and text == "(":
            node = self.expression()
            self.expect_op(")")
            return node
        raise ExpressionError(f"unexpected token {text or 'end of input'!r}", pos)


def parse(source: str) -> Expr:
    """Parse source text to an expression tree, leaving parameters unbound."""
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Compilation to stack programs

@dataclass(frozen=True)
class Program:
    code: np.ndarray
    consts: np.ndarray
    stack_depth: int
    source: str


def compile_expr(expr: Expr) -> Program:
    code: list = []
    consts: list = []
    const_index: dict = {}

    def emit_const(value: float) -> None:
        key = (value, math.copysign(1.0, value))
        idx = const_index.get(key)
        if idx is None:
            idx = len(consts)
            consts.append(value)
            const_index[key] = idx
        code.append(_ops.CONST)
        code.append(idx)

    depth = 0
    max_depth = 0

    def push(n: int = 1) -> None:
        nonlocal depth, max_depth
        depth += n
        max_depth = max(max_depth, depth)

    def pop(n: int = 1) -> None:
        nonlocal depth
        depth -= n

    def walk(node: Expr) -> None:
        if isinstance(node, Num):
            emit_const(node.value)
            push()
        elif isinstance(node, Var):
            code.append(_ops.XVAR)
            code.append(0)
            push()
        elif isinstance(node, Param):
            raise ExpressionError(f"unbound parameter {node.name!r}")
        elif isinstance(node, Pow) and _is_integer_exponent(node.right):
            walk(node.left)
            code.append(_ops.POWI)
            code.append(int(node.right.value))
        elif isinstance(node, _BinOp):
            walk(node.left)
            walk(node.right)
            code.append({Add: _ops.ADD, Sub: _ops.SUB, Mul: _ops.MUL,
                         Div: _ops.DIV, Pow: _ops.POW}[type(node)])
            code.append(0)
            pop()
        elif isinstance(node, Neg):
            walk(node.operand)
            code.append(_ops.NEG)
            code.append(0)
        elif isinstance(node, Func):
            walk(node.operand)
            code.append({"sqrt": _ops.SQRT, "exp": _ops.EXP, "log": _ops.LOG}[node.name])
            code.append(0)
        else:
            raise ExpressionError(f"cannot compile node {node!r}")

    walk(expr)
    if depth != 1:
        raise ExpressionError("internal compile error: unbalanced stack")
    if max_depth > _ops.MAX_STACK:
        raise ExpressionError(f"expression too deep (stack {max_depth})")
    return Program(
        code=np.asarray(code, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        stack_depth=max_depth,
        source=expr.to_source(),
    )


def _is_integer_exponent(e: Expr) -> bool:
    return (
        isinstance(e, Num)
        and e.value == int(e.value)
        and abs(e.value) <= _ops.POWI_MAX
        and e.value != 0
    )


class ProfileExpression:
    """A radial function with exact first and second derivatives.

    Evaluation is vectorized through the kernel backend; scalar input gives
    scalar output. Non-finite results are diagnosed by re-walking the tree
    at the first offending radius so domain errors name the subexpression
    and the r value.
    """

    def __init__(self, expr: Expr):
        unbound = expr.free_parameters()
        if unbound:
            raise ExpressionError(f"unbound parameters: {sorted(unbound)}")
        self.expr = expr.simplified()
        self.d1_expr = self.expr.diff().simplified()
        self.d2_expr = self.d1_expr.diff().simplified()
        self._programs = tuple(
            compile_expr(e) for e in (self.expr, self.d1_expr, self.d2_expr)
        )

    @property
    def source(self) -> str:
        return self.expr.to_source()

    def value(self, r):
        return self._eval(0, r)

    def d1(self, r):
        return self._eval(1, r)

    def d2(self, r):
        return self._eval(2, r)

    __call__ = value

    def _eval(self, which: int, r):
        arr = np.asarray(r, dtype=np.float64)
        scalar = arr.ndim == 0
        flat = np.ascontiguousarray(np.atleast_1d(arr).ravel())
        prog = self._programs[which]
        out = eval_program(prog.code, prog.consts, prog.stack_depth, flat)
        bad = ~np.isfinite(out)
        if bad.any():
            if not np.isfinite(flat).all():
                raise EvaluationError("non-finite abscissa", float(flat[~np.isfinite(flat)][0]))
            r_bad = float(flat[bad][0])
            tree = (self.expr, self.d1_expr, self.d2_expr)[which]
            tree.eval_scalar(r_bad)
            raise EvaluationError(f"non-finite value of {prog.source}", r_bad)
        if scalar:
            return float(out[0])
        return out.reshape(arr.shape)


def parse_radial_expression(source: str, parameters: Optional[dict] = None) -> ProfileExpression:
    """Parse profile source and bind parameters, returning an evaluable
    function with exact symbolic first and second derivatives."""
    expr = parse(source)
    if parameters:
        expr = expr.bind(parameters)
    return ProfileExpression(expr)
