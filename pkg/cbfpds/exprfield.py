"""
User-defined scalar and vector fields written as text.

Scenario files describe dynamics, controllers and barriers with small
arithmetic expressions over the state variables ``x1 .. xn`` and named
parameters, for example::

    9 - (3*x1^2 + 4*x1*x2 + 2*x2^2)

Grammar, loosest binding first::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

So ``^`` binds tighter than unary minus (``-x1^2`` is ``-(x1^2)``) and is
right-associative, while the other binary operators are left-associative.
Multiplication is always explicit.

Functions: ``sin cos exp log sqrt abs`` (one argument) and ``min max``
(two arguments). ``pi`` is a constant. The non-smooth functions are fine in
dynamics but `differentiate` refuses to go through them.
"""
from __future__ import annotations

import functools
import logging
import math
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .exceptions import (ExpressionSyntaxError, NonDifferentiableError,
                         NonFiniteResultError, UnboundParameterError,
                         UnknownIdentifierError, VariableIndexError)

logger = logging.getLogger(__name__)

UNARY_FUNCTIONS = ('sin', 'cos', 'exp', 'log', 'sqrt', 'abs')
BINARY_FUNCTIONS = ('min', 'max')
NONSMOOTH_FUNCTIONS = ('abs', 'min', 'max')
NAMED_CONSTANTS = {'pi': math.pi}

_TOKEN_RE = re.compile(
    r'\s*(?:'
    r'(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)'
    r'|(?P<name>[A-Za-z_][A-Za-z0-9_]*)'
    r'|(?P<op>[-+*/^(),])'
    r')'
)
_VARIABLE_RE = re.compile(r'x(\d+)$')


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    """State coordinate, stored zero-based (``x1`` is ``Var(0)``)."""
    index: int


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: ExprAst


@dataclass(frozen=True)
class BinOp:
    op: str
    left: ExprAst
    right: ExprAst


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


ExprAst = Union[Const, Var, Param, Neg, BinOp, Call]


# Constructors that fold the trivial cases produced by differentiation
def const(value: float) -> Const:
    return Const(float(value))


def neg(e: ExprAst) -> ExprAst:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Neg):
        return e.operand
    return Neg(e)


def _is_const(e, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _fold(op, a, b):
    if _is_const(a) and _is_const(b):
        try:
            value = _BINARY_OPS[op](a.value, b.value)
        except (ArithmeticError, ValueError):
            return None
        if math.isfinite(value):
            return Const(value)
    return None


def add(a: ExprAst, b: ExprAst) -> ExprAst:
    folded = _fold('+', a, b)
    if folded is not None:
        return folded
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return BinOp('+', a, b)


def sub(a: ExprAst, b: ExprAst) -> ExprAst:
    folded = _fold('-', a, b)
    if folded is not None:
        return folded
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return BinOp('-', a, b)


def mul(a: ExprAst, b: ExprAst) -> ExprAst:
    folded = _fold('*', a, b)
    if folded is not None:
        return folded
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return BinOp('*', a, b)


def div(a: ExprAst, b: ExprAst) -> ExprAst:
    folded = _fold('/', a, b)
    if folded is not None:
        return folded
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    return BinOp('/', a, b)


def power(a: ExprAst, b: ExprAst) -> ExprAst:
    folded = _fold('^', a, b)
    if folded is not None:
        return folded
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return Const(1.0)
    return BinOp('^', a, b)


def call(func: str, *args: ExprAst) -> ExprAst:
    if all(_is_const(arg) for arg in args):
        try:
            value = _FUNCTIONS[func](*(arg.value for arg in args))
        except (ArithmeticError, ValueError):
            value = None
        if value is not None and math.isfinite(value):
            return Const(value)
    return Call(func, tuple(args))


def _pow(a, b):
    result = a ** b
    if isinstance(result, complex):
        raise ValueError('complex power')
    return result


_BINARY_OPS = {
    '+': lambda a, b: a + b,
    '-': lambda a, b: a - b,
    '*': lambda a, b: a * b,
    '/': lambda a, b: a / b,
    '^': _pow,
}

_FUNCTIONS = {
    'sin': math.sin,
    'cos': math.cos,
    'exp': math.exp,
    'log': math.log,
    'sqrt': math.sqrt,
    'abs': abs,
    'min': min,
    'max': max,
}


# Parsing
class _Parser:
    def __init__(self, text: str, dim: int, params: Sequence[str]):
        self.text = text
        self.dim = dim
        self.params = frozenset(params)
        self.tokens = self._tokenize(text)
        self.pos = 0

    @staticmethod
    def _tokenize(text):
        tokens = []
        idx = 0
        while idx < len(text):
            if text[idx:].strip() == '':
                break
            match = _TOKEN_RE.match(text, idx)
            if match is None or match.end() == idx:
                bad = idx + len(text[idx:]) - len(text[idx:].lstrip())
                raise ExpressionSyntaxError(
                    f'Unexpected character {text[bad]!r}', bad
                )
            kind = match.lastgroup
            start = match.start(kind)
            tokens.append((kind, match.group(kind), start))
            idx = match.end()
        tokens.append(('end', '', len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, value):
        kind, text, where = self.advance()
        if text != value or kind != 'op':
            found = text or 'end of input'
            raise ExpressionSyntaxError(
                f'Expected {value!r}, found {found!r}', where
            )

    def parse(self) -> ExprAst:
        if self.peek()[0] == 'end':
            raise ExpressionSyntaxError('Empty expression', 0)
        tree = self.expr()
        kind, text, where = self.peek()
        if kind != 'end':
            raise ExpressionSyntaxError(f'Unexpected token {text!r}', where)
        return tree

    def expr(self):
        tree = self.term()
        while self.peek()[1] in ('+', '-') and self.peek()[0] == 'op':
            op = self.advance()[1]
            tree = BinOp(op, tree, self.term())
        return tree

    def term(self):
        tree = self.unary()
        while self.peek()[1] in ('*', '/') and self.peek()[0] == 'op':
            op = self.advance()[1]
            tree = BinOp(op, tree, self.unary())
        return tree

    def unary(self):
        if self.peek()[:2] == ('op', '-'):
            self.advance()
            operand = self.unary()
            if isinstance(operand, Const):
                return Const(-operand.value)
            return Neg(operand)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ('op', '^'):
            self.advance()
            return BinOp('^', base, self.unary())
        return base

    def atom(self):
        kind, text, where = self.advance()
        if kind == 'number':
            return Const(float(text))
        if kind == 'name':
            if self.peek()[:2] == ('op', '('):
                return self.call(text, where)
            return self.identifier(text, where)
        if (kind, text) == ('op', '('):
            tree = self.expr()
            self.expect(')')
            return tree
        found = text or 'end of input'
        raise ExpressionSyntaxError(f'Unexpected token {found!r}', where)

    def call(self, name, where):
        if name in UNARY_FUNCTIONS:
            arity = 1
        elif name in BINARY_FUNCTIONS:
            arity = 2
        else:
            raise UnknownIdentifierError(
                f'Unknown function {name!r} at position {where}'
            )
        self.expect('(')
        args = [self.expr()]
        while self.peek()[:2] == ('op', ','):
            self.advance()
            args.append(self.expr())
        self.expect(')')
        if len(args) != arity:
            raise ExpressionSyntaxError(
                f'{name} takes {arity} argument(s), got {len(args)}', where
            )
        return Call(name, tuple(args))

    def identifier(self, name, where):
        match = _VARIABLE_RE.match(name)
        if match is not None and name not in self.params:
            index = int(match.group(1))
            if not 1 <= index <= self.dim:
                raise VariableIndexError(
                    f'Variable {name} at position {where} is out of range '
                    f'for dimension {self.dim}'
                )
            return Var(index - 1)
        if name in self.params:
            return Param(name)
        if name in NAMED_CONSTANTS:
            return Const(NAMED_CONSTANTS[name])
        raise UnknownIdentifierError(
            f'Unknown identifier {name!r} at position {where}'
        )


def parse_expression(text: str, dim: int,
                     params: Sequence[str] = ()) -> ExprAst:
    """
    Parse ``text`` into an expression tree.

    Parameters
    ----------
    text: ``str``
        Expression source.
    dim: ``int``
        State dimension; variables ``x1`` to ``x{dim}`` are allowed.
    params: sequence of ``str``, optional
        Names of parameters that may appear in the expression.

    Raises
    ------
    ExpressionSyntaxError
        On malformed input, with the character position.
    UnknownIdentifierError
        On names that are not variables, functions, constants or parameters.
    VariableIndexError
        On ``xi`` with ``i`` outside ``1..dim``.
    """
    logger.debug('parse_expression(%r, dim=%s)', text, dim)
    if not text or not text.strip():
        raise ExpressionSyntaxError('Empty expression', 0)
    return _Parser(text, dim, params).parse()


def parse_vector(texts: Sequence[str], dim: int,
                 params: Sequence[str] = ()) -> tuple:
    """Parse one expression per component of a vector field."""
    return tuple(parse_expression(text, dim, params) for text in texts)


# Printing
_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _precedence(e: ExprAst) -> int:
    if isinstance(e, BinOp):
        return {'+': _PREC_ADD, '-': _PREC_ADD, '*': _PREC_MUL,
                '/': _PREC_MUL, '^': _PREC_POW}[e.op]
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Const) and math.copysign(1.0, e.value) < 0:
        return _PREC_NEG
    return _PREC_ATOM


def _wrap(e: ExprAst, parens: bool) -> str:
    text = to_text(e)
    return f'({text})' if parens else text


def to_text(e: ExprAst) -> str:
    """
    Print an expression with the fewest parentheses that reparse to ``e``.

    ``parse_expression(to_text(e))`` is structurally equal to ``e`` for any
    tree produced by the parser.
    """
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f'x{e.index + 1}'
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Neg):
        return '-' + _wrap(e.operand, _precedence(e.operand) < _PREC_NEG)
    if isinstance(e, Call):
        return f'{e.func}({", ".join(to_text(arg) for arg in e.args)})'
    prec = _precedence(e)
    if e.op == '^':
        left = _wrap(e.left, _precedence(e.left) <= _PREC_POW)
        right = _wrap(e.right, _precedence(e.right) < _PREC_NEG)
        return f'{left}^{right}'
    left = _wrap(e.left, _precedence(e.left) < prec)
    right = _wrap(e.right, _precedence(e.right) <= prec)
    return f'{left} {e.op} {right}'


# Evaluation
def _compile(e: ExprAst) -> Callable:
    if isinstance(e, Const):
        value = e.value
        return lambda x, p: value
    if isinstance(e, Var):
        index = e.index
        return lambda x, p: x[index]
    if isinstance(e, Param):
        name = e.name

        def lookup(x, p):
            try:
                return p[name]
            except KeyError:
                raise UnboundParameterError(
                    f'Parameter {name!r} has no value'
                ) from None
        return lookup
    if isinstance(e, Neg):
        inner = _compile(e.operand)
        return lambda x, p: -inner(x, p)
    if isinstance(e, BinOp):
        left, right = _compile(e.left), _compile(e.right)
        op = _BINARY_OPS[e.op]
        return lambda x, p: op(left(x, p), right(x, p))
    func = _FUNCTIONS[e.func]
    args = [_compile(arg) for arg in e.args]
    if len(args) == 1:
        (arg,) = args
        return lambda x, p: func(arg(x, p))
    first, second = args
    return lambda x, p: func(first(x, p), second(x, p))


@functools.lru_cache(maxsize=1024)
def compile_expression(e: ExprAst) -> Callable:
    """Turn a tree into a nested closure ``f(x, params) -> float``."""
    return _compile(e)


def evaluate(ast: ExprAst, x, params: Mapping[str, float] = None) -> float:
    """
    Evaluate ``ast`` at state ``x`` in double precision.

    Raises
    ------
    UnboundParameterError
        If a parameter has no value in ``params``.
    NonFiniteResultError
        On NaN or infinite results and on domain errors such as
        ``sqrt(-1)``, ``log(0)`` or division by zero.
    """
    fn = compile_expression(ast)
    try:
        value = float(fn([float(v) for v in x], params or {}))
    except (ValueError, ArithmeticError) as exc:
        raise NonFiniteResultError(
            f'Evaluating {to_text(ast)} at {list(np.asarray(x, float))} '
            f'failed: {exc}'
        ) from exc
    if not math.isfinite(value):
        raise NonFiniteResultError(
            f'Evaluating {to_text(ast)} at {list(np.asarray(x, float))} '
            f'gave {value}'
        )
    return value


# Differentiation
def depends_on(e: ExprAst, var: int) -> bool:
    if isinstance(e, Var):
        return e.index == var
    if isinstance(e, (Const, Param)):
        return False
    if isinstance(e, Neg):
        return depends_on(e.operand, var)
    if isinstance(e, BinOp):
        return depends_on(e.left, var) or depends_on(e.right, var)
    return any(depends_on(arg, var) for arg in e.args)


@functools.lru_cache(maxsize=4096)
def differentiate(ast: ExprAst, var: int) -> ExprAst:
    """
    Symbolic partial derivative of ``ast`` with respect to ``x{var+1}``.

    ``var`` is zero-based, matching `Var.index`.

    Raises
    ------
    NonDifferentiableError
        If ``abs``, ``min`` or ``max`` is applied to a subexpression that
        depends on ``var``.
    """
    e = ast
    if not depends_on(e, var):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0)
    if isinstance(e, Neg):
        return neg(differentiate(e.operand, var))
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        du, dv = differentiate(u, var), differentiate(v, var)
        if e.op == '+':
            return add(du, dv)
        if e.op == '-':
            return sub(du, dv)
        if e.op == '*':
            return add(mul(du, v), mul(u, dv))
        if e.op == '/':
            return div(sub(mul(du, v), mul(u, dv)), power(v, const(2)))
        if not depends_on(v, var):
            return mul(mul(v, power(u, sub(v, const(1)))), du)
        # u^v = exp(v log u)
        return mul(e, add(mul(dv, call('log', u)), div(mul(v, du), u)))
    if e.func in NONSMOOTH_FUNCTIONS:
        raise NonDifferentiableError(
            f'Cannot differentiate {to_text(e)}: {e.func} is not smooth'
        )
    (u,) = e.args
    du = differentiate(u, var)
    if e.func == 'sin':
        outer = call('cos', u)
    elif e.func == 'cos':
        outer = neg(call('sin', u))
    elif e.func == 'exp':
        outer = e
    elif e.func == 'log':
        return div(du, u)
    else:
        return div(du, mul(const(2), e))
    return mul(outer, du)


def gradient(ast: ExprAst, dim: int) -> tuple:
    """All ``dim`` partial derivatives of ``ast``."""
    return tuple(differentiate(ast, i) for i in range(dim))


def hessian(ast: ExprAst, dim: int) -> tuple:
    """Symbolic Hessian as a ``dim x dim`` nested tuple."""
    first = gradient(ast, dim)
    return tuple(gradient(partial, dim) for partial in first)
