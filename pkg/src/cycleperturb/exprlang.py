"""Scalar expression language: parsing, evaluation, symbolic differentiation.

Expressions are built from numeric literals, named variables, unary negation,
the binary operators ``+ - * / ^`` (integer exponents only, ``^`` binds
tightest and is right-associative) and the functions ``sin cos exp sqrt abs``.
There is no implicit multiplication: ``2x`` is a syntax error.

ASTs are immutable; evaluation is pure.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")

# internal-only function, produced by differentiating abs; not parseable
_INTERNAL_FUNCTIONS = ("sign",)


class ExprError(Exception):
    """Base class for expression-language errors."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        detail = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class EvalError(ExprError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Num | Var | Neg | BinOp | Call

ZERO = Num(0.0)
ONE = Num(1.0)


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_vars(e.arg)
    if isinstance(e, Call):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


def contains_abs(e: Expr) -> bool:
    if isinstance(e, Call):
        return e.fn == "abs" or contains_abs(e.arg)
    if isinstance(e, Neg):
        return contains_abs(e.arg)
    if isinstance(e, BinOp):
        return contains_abs(e.left) or contains_abs(e.right)
    return False


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.lastgroup is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str, allowed: Iterable[str] | None):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.allowed = None if allowed is None else frozenset(allowed)

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"got {text or 'end of input'!r}", off, expected=repr(op))
        return self.next()

    def parse(self) -> Expr:
        kind, _, off = self.peek()
        if kind == "end":
            raise ParseError("empty input", off, expected="expression")
        e = self.sum_()
        kind, text, off = self.peek()
        if kind != "end":
            raise ParseError(f"trailing input {text!r}", off, expected="end of input")
        return e

    def sum_(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                e = BinOp(text, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                e = BinOp(text, e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, off = self.peek()
        if kind == "op" and text == "^":
            self.next()
            exp = self.exponent()
            return BinOp("^", base, exp)
        return base

    def exponent(self) -> Expr:
        # ^ is right-associative; exponents must be (possibly negated,
        # possibly parenthesised) integer constants
        kind, text, off = self.peek()
        neg = False
        if kind == "op" and text == "-":
            self.next()
            neg = True
        e = self.power()
        if neg:
            e = Neg(e)
        v = _const_value(e)
        if v is None or v != int(v):
            raise ParseError("exponent must be an integer constant", off,
                             expected="integer")
        return Num(float(int(v)))

    def atom(self) -> Expr:
        kind, text, off = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.sum_()
                self.expect_op(")")
                return Call(text, arg)
            if self.allowed is not None and text not in self.allowed:
                raise ParseError(f"unknown identifier {text!r}", off,
                                 expected="one of " + ", ".join(sorted(self.allowed)))
            return Var(text)
        if kind == "op" and text == "(":
            e = self.sum_()
            self.expect_op(")")
            return e
        raise ParseError(f"got {text or 'end of input'!r}", off,
                         expected="number, identifier or '('")


def _const_value(e: Expr) -> float | None:
    e = fold(e)
    return e.value if isinstance(e, Num) else None


def parse(source: str, allowed: Iterable[str] | None = None) -> Expr:
    """Parse ``source`` into an AST.

    When ``allowed`` is given, any identifier outside it (and outside the
    function names) is a parse error.
    """
    return _Parser(source, allowed).parse()


# ---------------------------------------------------------------------------
# Pretty-printing (round-trips through parse)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_string(e: Expr) -> str:
    return _fmt(e, 0)


def _fmt(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Num):
        v = e.value
        s = repr(int(v)) if v == int(v) and abs(v) < 1e16 else repr(v)
        if v < 0:
            return f"({s})" if parent_prec > 0 else s
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({_fmt(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _fmt(e.arg, _PREC["neg"])
        return f"({s})" if parent_prec > _PREC["neg"] else s
    prec = _PREC[e.op]
    # left operand at same precedence is fine for left-assoc ops; the right
    # operand needs a bump so a-(b-c) keeps its parens
    ls = _fmt(e.left, prec)
    rs = _fmt(e.right, prec + 1)
    s = f"{ls} {e.op} {rs}" if e.op != "^" else f"{ls}^{rs}"
    return f"({s})" if parent_prec > prec else s


# ---------------------------------------------------------------------------
# Constant folding


def fold(e: Expr) -> Expr:
    if isinstance(e, (Num, Var)):
        return e
    if isinstance(e, Neg):
        a = fold(e.arg)
        if isinstance(a, Num):
            return Num(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(e, Call):
        a = fold(e.arg)
        if isinstance(a, Num):
            try:
                return Num(_apply_fn(e.fn, a.value))
            except ValueError:
                pass  # e.g. sqrt of a negative: leave symbolic, error at eval
        return Call(e.fn, a)
    l, r = fold(e.left), fold(e.right)
    if isinstance(l, Num) and isinstance(r, Num) and not (e.op == "/" and r.value == 0):
        return Num(_apply_op(e.op, l.value, r.value))
    if e.op == "+":
        if _is_zero(l):
            return r
        if _is_zero(r):
            return l
    elif e.op == "-":
        if _is_zero(r):
            return l
        if _is_zero(l):
            return fold(Neg(r))
    elif e.op == "*":
        if _is_zero(l) or _is_zero(r):
            return ZERO
        if _is_one(l):
            return r
        if _is_one(r):
            return l
    elif e.op == "/":
        if _is_zero(l):
            return ZERO
        if _is_one(r):
            return l
    elif e.op == "^":
        if isinstance(r, Num):
            if r.value == 0:
                return ONE
            if r.value == 1:
                return l
    return BinOp(e.op, l, r)


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 0


def _is_one(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 1


def _apply_fn(fn: str, x: float) -> float:
    if fn == "sin":
        return math.sin(x)
    if fn == "cos":
        return math.cos(x)
    if fn == "exp":
        return math.exp(x)
    if fn == "sqrt":
        return math.sqrt(x)
    if fn == "abs":
        return abs(x)
    if fn == "sign":
        return float(np.sign(x))
    raise ValueError(fn)


def _apply_op(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return a ** int(b)


# ---------------------------------------------------------------------------
# Symbolic differentiation


def diff(e: Expr, var: str, warnings: list[str] | None = None) -> Expr:
    """Symbolic derivative of ``e`` with respect to ``var``, constant-folded.

    The derivative of ``abs`` is left symbolic as ``sign(u)*u'``; a note is
    appended to ``warnings`` since it is undefined at ``u = 0``.
    """
    return fold(_diff(e, var, warnings))


def _diff(e: Expr, var: str, warnings: list[str] | None) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, var, warnings))
    if isinstance(e, Call):
        da = _diff(e.arg, var, warnings)
        if e.fn == "sin":
            outer = Call("cos", e.arg)
        elif e.fn == "cos":
            outer = Neg(Call("sin", e.arg))
        elif e.fn == "exp":
            outer = e
        elif e.fn == "sqrt":
            outer = BinOp("/", Num(0.5), e)
        elif e.fn == "abs":
            if warnings is not None:
                warnings.append("derivative of abs() is undefined at 0; using sign()")
            outer = Call("sign", e.arg)
        elif e.fn == "sign":
            outer = ZERO  # a.e. zero; abs was already flagged
        else:
            raise ExprError(f"cannot differentiate {e.fn}")
        return BinOp("*", outer, da)
    dl = _diff(e.left, var, warnings)
    dr = _diff(e.right, var, warnings)
    if e.op in "+-":
        return BinOp(e.op, dl, dr)
    if e.op == "*":
        return BinOp("+", BinOp("*", dl, e.right), BinOp("*", e.left, dr))
    if e.op == "/":
        num = BinOp("-", BinOp("*", dl, e.right), BinOp("*", e.left, dr))
        return BinOp("/", num, BinOp("^", e.right, Num(2)))
    # integer power: d(u^n) = n*u^(n-1)*u'
    n = e.right.value  # parser guarantees an integer Num
    return BinOp("*", BinOp("*", Num(n), BinOp("^", e.left, Num(n - 1))), dl)


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Tree-walking evaluation with explicit error reporting."""
    v = _eval(e, bindings)
    if not math.isfinite(v):
        raise EvalError(f"non-finite result {v!r} for {to_string(e)}")
    return v


def _eval(e: Expr, b: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(b[e.name])
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, b)
    if isinstance(e, Call):
        x = _eval(e.arg, b)
        try:
            return _apply_fn(e.fn, x)
        except ValueError as exc:
            raise EvalError(f"{e.fn}({x}) is undefined") from exc
    l = _eval(e.left, b)
    r = _eval(e.right, b)
    if e.op == "/" and r == 0:
        raise EvalError(f"division by zero in {to_string(e)}")
    return _apply_op(e.op, l, r)


_NUMPY_NS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
    "abs": np.abs, "sign": np.sign, "nan": np.nan,
}


def compile_expr(e: Expr, args: tuple[str, ...],
                 params: Mapping[str, float] | None = None) -> Callable:
    """Compile ``e`` to a numpy-vectorized function of the given arguments.

    Parameter names are baked in as constants.  The returned callable
    broadcasts over array inputs, which is what the ODE layer relies on.
    """
    e = fold(e)
    missing = free_vars(e) - set(args) - set(params or ())
    if missing:
        raise EvalError(f"unbound variables {sorted(missing)} in {to_string(e)}")
    src = _codegen(e)
    ns = dict(_NUMPY_NS)
    if params:
        ns.update({k: float(v) for k, v in params.items()})
    fn = eval(f"lambda {', '.join(args)}: ({src})", ns)  # noqa: S307 - our own codegen
    fn.expr = e
    return fn


def _codegen(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg)})"
    if isinstance(e, Call):
        return f"{e.fn}({_codegen(e.arg)})"
    op = "**" if e.op == "^" else e.op
    return f"({_codegen(e.left)} {op} {_codegen(e.right)})"
