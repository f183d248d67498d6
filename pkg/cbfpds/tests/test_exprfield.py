import logging
import math

import numpy as np
import pytest

from cbfpds.exceptions import (ExpressionSyntaxError, NonDifferentiableError,
                               NonFiniteResultError, UnboundParameterError,
                               UnknownIdentifierError, VariableIndexError)
from cbfpds.exprfield import (BinOp, Call, Const, Neg, Param, Var,
                              differentiate, evaluate, gradient, hessian,
                              parse_expression, parse_vector, to_text)

logger = logging.getLogger(__name__)


@pytest.mark.parametrize('text,x,expected', [
    ('1 + 2 * 3', (0,), 7.0),
    ('(1 + 2) * 3', (0,), 9.0),
    ('2^3^2', (0,), 512.0),
    ('-x1^2', (3,), -9.0),
    ('(-x1)^2', (3,), 9.0),
    ('8 / 4 / 2', (0,), 1.0),
    ('10 - 4 - 3', (0,), 3.0),
    ('x1 - -2', (1,), 3.0),
    ('min(x1, 2) + max(x1, 2)', (5,), 7.0),
    ('abs(-x1) + sqrt(4)', (2,), 4.0),
    ('sin(pi / 2) + cos(0) + exp(0) + log(1)', (0,), 3.0),
    ('1.5e1 + .5', (0,), 15.5),
])
def test_evaluate(text, x, expected):
    logger.debug('test_evaluate')
    assert evaluate(parse_expression(text, 1), x) == pytest.approx(expected)


def test_parse_structure():
    logger.debug('test_parse_structure')
    assert parse_expression('x2', 2) == Var(1)
    assert parse_expression('-x1^2', 1) == Neg(BinOp('^', Var(0),
                                                      Const(2.0)))
    assert parse_expression('-3', 1) == Const(-3.0)
    assert parse_expression('k * x1', 1, ['k']) == BinOp('*', Param('k'),
                                                          Var(0))
    assert len(parse_vector(['x1', 'x2 + 1'], 2)) == 2


@pytest.mark.parametrize('text,position', [
    ('3 + * 4', 4),
    ('x1 $ 2', 3),
    ('(x1 + 1', 7),
    ('x1 x2', 3),
    ('', 0),
    ('   ', 0),
])
def test_syntax_errors(text, position):
    logger.debug('test_syntax_errors')
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(text, 2)
    assert info.value.position == position


def test_identifier_errors():
    logger.debug('test_identifier_errors')
    with pytest.raises(UnknownIdentifierError):
        parse_expression('y + 1', 2)
    with pytest.raises(UnknownIdentifierError):
        parse_expression('tan(x1)', 2)
    with pytest.raises(VariableIndexError):
        parse_expression('x3', 2)
    with pytest.raises(VariableIndexError):
        parse_expression('x0', 2)
    with pytest.raises(ExpressionSyntaxError):
        parse_expression('min(x1)', 2)


@pytest.mark.parametrize('text,x', [
    ('sqrt(x1)', (-1,)),
    ('log(x1)', (0,)),
    ('1 / x1', (0,)),
    ('exp(x1)', (1000,)),
    ('x1^0.5', (-8,)),
])
def test_non_finite(text, x):
    logger.debug('test_non_finite')
    with pytest.raises(NonFiniteResultError):
        evaluate(parse_expression(text, 1), x)


def test_params():
    logger.debug('test_params')
    ast = parse_expression('k * x1 + x2', 2, ['k'])
    assert evaluate(ast, (2, 1), {'k': 3.0}) == 7.0
    with pytest.raises(UnboundParameterError):
        evaluate(ast, (2, 1))


@pytest.mark.parametrize('text', [
    '9 - (3*x1^2 + 4*x1*x2 + 2*x2^2)',
    '-x1^2 - -x2',
    '(x1 - x2) - (x1 - x2)',
    '2^-x1',
    '(-x1)^2 / (1 + x2)^3^2',
    'x1 / (x2 * x1)',
    'sin(x1 - pi) * max(x1, -x2)',
])
def test_to_text_reparses(text):
    logger.debug('test_to_text_reparses')
    ast = parse_expression(text, 2)
    assert parse_expression(to_text(ast), 2) == ast


@pytest.mark.parametrize('text,exact', [
    ('9 - (3*x1^2 + 4*x1*x2 + 2*x2^2)',
     lambda x: [-6 * x[0] - 4 * x[1], -4 * x[0] - 4 * x[1]]),
    ('sin(x1) * exp(x2)',
     lambda x: [math.cos(x[0]) * math.exp(x[1]),
                math.sin(x[0]) * math.exp(x[1])]),
    ('x1 / x2 + log(x2)',
     lambda x: [1 / x[1], -x[0] / x[1] ** 2 + 1 / x[1]]),
    ('sqrt(x1^2 + x2^2)',
     lambda x: [x[0] / math.hypot(*x), x[1] / math.hypot(*x)]),
    ('x2^x1',
     lambda x: [x[1] ** x[0] * math.log(x[1]), x[0] * x[1] ** (x[0] - 1)]),
])
def test_gradient(text, exact):
    logger.debug('test_gradient')
    grad = gradient(parse_expression(text, 2), 2)
    for x in ((0.3, 1.7), (-1.2, 0.4), (2.0, 2.5)):
        values = [evaluate(g, x) for g in grad]
        assert np.allclose(values, exact(x), rtol=1e-10, atol=1e-12)


def test_hessian():
    logger.debug('test_hessian')
    ast = parse_expression('9 - (3*x1^2 + 4*x1*x2 + 2*x2^2)', 2)
    hess = hessian(ast, 2)
    values = [[evaluate(e, (0.5, -1.0)) for e in row] for row in hess]
    assert np.allclose(values, [[-6, -4], [-4, -4]])


def test_non_differentiable():
    logger.debug('test_non_differentiable')
    ast = parse_expression('abs(x1) + x2', 2)
    with pytest.raises(NonDifferentiableError):
        gradient(ast, 2)
    # x2 does not appear inside abs
    assert differentiate(ast, 1) == Const(1.0)
    ast = parse_expression('max(x1, 1) + x2^2', 2)
    with pytest.raises(NonDifferentiableError):
        gradient(ast, 2)


def random_expression(rng, depth):
    """Random smooth tree over x1, x2 in the shape the parser produces."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.6:
            return Var(int(rng.integers(2)))
        return Const(float(round(rng.uniform(-2, 2), 2)))
    kind = str(rng.choice(['+', '-', '*', '^', '/', 'neg', 'sin', 'cos',
                           'exp']))
    sub = random_expression(rng, depth - 1)
    if kind in ('+', '-', '*'):
        return BinOp(kind, sub, random_expression(rng, depth - 1))
    if kind == '^':
        return BinOp('^', sub, Const(float(rng.integers(2, 4))))
    if kind == '/':
        bounded = Call('cos', (random_expression(rng, depth - 1),))
        return BinOp('/', sub, BinOp('+', Const(2.0), bounded))
    if kind == 'neg':
        # the parser folds negated constants
        return sub if isinstance(sub, Const) else Neg(sub)
    if kind == 'exp':
        return Call('exp', (random_expression(rng, min(depth - 1, 1)),))
    return Call(kind, (sub,))


def test_random_to_text_reparses():
    logger.debug('test_random_to_text_reparses')
    rng = np.random.default_rng(7)
    for _ in range(1000):
        ast = random_expression(rng, int(rng.integers(1, 6)))
        assert parse_expression(to_text(ast), 2) == ast


def central_difference(ast, x, var, step=1e-4):
    def at(offset):
        shifted = list(x)
        shifted[var] += offset
        return evaluate(ast, shifted)
    return (-at(2 * step) + 8 * at(step) - 8 * at(-step)
            + at(-2 * step)) / (12 * step)


@pytest.mark.timeout(120)
def test_random_gradient_matches_differences():
    logger.debug('test_random_gradient_matches_differences')
    rng = np.random.default_rng(11)
    cases = 0
    for _ in range(100):
        ast = random_expression(rng, 4)
        grad = gradient(ast, 2)
        for x in rng.uniform(-0.5, 0.5, (10, 2)):
            exact = np.array([evaluate(g, x) for g in grad])
            approx = np.array([central_difference(ast, x, var)
                               for var in range(2)])
            scale = max(1.0, float(np.max(np.abs(exact))))
            assert np.max(np.abs(exact - approx)) <= 1e-6 * scale, \
                to_text(ast)
            cases += 1
    assert cases == 1000
