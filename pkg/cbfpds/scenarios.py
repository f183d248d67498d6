"""
Built-in scenarios and the scenario JSON format.

A scenario file is a JSON object::

    {
      "name": "...", "dim": 2,
      "dynamics": {"kind": "linear", "A": [[...]]}
                | {"kind": "affine", "A": [[...]], "b": [...]}
                | {"kind": "expr", "f": ["...", "..."]},
      "nominal_controller": {"kind": "none"}
                          | {"kind": "linear", "K": [[...]]}
                          | {"kind": "expr", "u": ["...", "..."]},
      "barrier": {"kind": "quadratic", "c": 9, "Q": [[...]]}
               | {"kind": "expr", "h": "...", "grad": ["...", "..."]},
      "P": [[...]], "G": [[...]], "a": 1.0,
      "gamma": {"kind": "auto"} | {"kind": "linear_slope", "slope": 0.5}
             | {"kind": "table", "knots": [[s, g], ...]},
      "bounding_box": [[lo, hi], ...], "params": {"k": 1.0}
    }

``G``, ``gamma``, ``bounding_box``, ``params`` and ``grad`` are optional.
Built-in scenarios are addressed as ``builtin:NAME``.
"""
from __future__ import annotations

import json
import logging
import os
from collections.abc import Mapping

import numpy as np

from .config import DEFAULT_SEED
from .exceptions import CbfPdsError, ScenarioError
from .geometry import SpdMatrix
from .problem import (BarrierFunction, DynamicsField, GammaFn,
                      NominalController, SafeSetRegion, Scenario,
                      fit_gamma_envelope, gamma_for_quadratic)

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = 'builtin:'
# Samples used to fit gamma for expression barriers declared with kind auto
AUTO_GAMMA_SAMPLES = 2000

EXAMPLE_A = [[1.0, 0.0], [0.0, 1.0]]
EXAMPLE_K = [[-2.0, -4.0], [1.0, -1.0]]
EXAMPLE_Q = [[3.0, 2.0], [2.0, 2.0]]
EXAMPLE_C = 9.0
EXAMPLE_G = [[0.625, 0.125], [0.125, 2.625]]
EXAMPLE_WRONG_P = [[3.0, 0.0], [0.0, 1.0]]
EXAMPLE_BARRIER_TEXT = '9 - (3*x1^2 + 4*x1*x2 + 2*x2^2)'


def design_example(wrong_p: bool = False,
                   expression: bool = False) -> Scenario:
    """
    Planar safe stabilization example.

    Open loop ``xdot = x`` with nominal feedback ``K x`` so that
    ``f0 = [[-1, -4], [1, 0]] x``,
    safe set ``{3 x1^2 + 4 x1 x2 + 2 x2^2 <= 9}``
    and ``G`` solving ``G A0 + A0^T G = -I``. The projection metric is ``G``
    or, for ``wrong_p``, ``diag(3, 1)``.
    """
    quadratic = BarrierFunction.quadratic(EXAMPLE_C, EXAMPLE_Q)
    if expression:
        barrier = BarrierFunction.expression(EXAMPLE_BARRIER_TEXT, 2)
        name = 'paper-example-expr'
    else:
        barrier = quadratic
        name = 'paper-example'
    G = SpdMatrix(EXAMPLE_G)
    P = SpdMatrix(EXAMPLE_WRONG_P) if wrong_p else G
    if wrong_p:
        name = 'paper-example-wrongP'
    return Scenario(
        name=name,
        dim=2,
        dynamics=DynamicsField.linear(EXAMPLE_A),
        controller=NominalController.linear(EXAMPLE_K),
        barrier=barrier,
        P=P,
        G=G,
        a=1.0,
        gamma=gamma_for_quadratic(EXAMPLE_C, EXAMPLE_Q),
        bounding_box=quadratic.default_box(),
    )


def unit_disc() -> Scenario:
    """Rotation with unit damping on the unit disc, Euclidean metrics."""
    barrier = BarrierFunction.quadratic(1.0, np.eye(2))
    return Scenario(
        name='unit-disc',
        dim=2,
        dynamics=DynamicsField.linear([[0.0, 1.0], [-1.0, 0.0]]),
        controller=NominalController.linear(-np.eye(2)),
        barrier=barrier,
        P=SpdMatrix.identity(2),
        G=SpdMatrix.identity(2),
        a=1.0,
        gamma=gamma_for_quadratic(1.0, np.eye(2)),
    )


BUILTINS = {
    'paper-example': lambda: design_example(),
    'paper-example-wrongP': lambda: design_example(wrong_p=True),
    'paper-example-expr': lambda: design_example(expression=True),
    'unit-disc': unit_disc,
}


def _require(info: Mapping, key: str, where: str):
    try:
        return info[key]
    except KeyError:
        raise ScenarioError(f'Missing key {key!r} in {where}') from None


def _dynamics(info, dim, params):
    kind = _require(info, 'kind', 'dynamics')
    if kind == 'linear':
        return DynamicsField('linear', dim, A=_require(info, 'A', 'dynamics'))
    if kind == 'affine':
        return DynamicsField('affine', dim, A=_require(info, 'A', 'dynamics'),
                             b=_require(info, 'b', 'dynamics'))
    if kind == 'expr':
        return DynamicsField.expression(_require(info, 'f', 'dynamics'), dim,
                                        params)
    raise ScenarioError(f'Unknown dynamics kind {kind!r}')


def _controller(info, dim, params):
    kind = _require(info, 'kind', 'nominal_controller')
    if kind == 'none':
        return NominalController.none(dim)
    if kind == 'linear':
        return NominalController(
            'linear', dim, A=_require(info, 'K', 'nominal_controller'))
    if kind == 'expr':
        return NominalController.expression(
            _require(info, 'u', 'nominal_controller'), dim, params)
    raise ScenarioError(f'Unknown controller kind {kind!r}')


def _barrier(info, dim, params):
    kind = _require(info, 'kind', 'barrier')
    extra = {'gtol': float(info['gtol'])} if 'gtol' in info else {}
    if kind == 'quadratic':
        barrier = BarrierFunction.quadratic(
            float(_require(info, 'c', 'barrier')),
            _require(info, 'Q', 'barrier'), **extra)
        if barrier.dim != dim:
            raise ScenarioError(
                f'Barrier Q has dimension {barrier.dim}, scenario has {dim}'
            )
        return barrier
    if kind == 'expr':
        return BarrierFunction.expression(
            _require(info, 'h', 'barrier'), dim, grad=info.get('grad'),
            params=params, **extra)
    raise ScenarioError(f'Unknown barrier kind {kind!r}')


def _gamma(info, barrier, box, seed):
    kind = info.get('kind', 'auto')
    if kind == 'linear_slope':
        return GammaFn.linear(float(_require(info, 'slope', 'gamma')))
    if kind == 'table':
        return GammaFn.tabulated(_require(info, 'knots', 'gamma'))
    if kind != 'auto':
        raise ScenarioError(f'Unknown gamma kind {kind!r}')
    quad = barrier.quadratic_form
    if quad is not None:
        return gamma_for_quadratic(*quad)
    if box is None:
        raise ScenarioError('Fitting gamma needs a bounding_box')
    logger.warning('Fitting gamma by sampling for an expression barrier')
    return fit_gamma_envelope(barrier, SafeSetRegion(barrier, box),
                              AUTO_GAMMA_SAMPLES,
                              np.random.default_rng(seed))


def scenario_from_dict(info: Mapping, seed: int = DEFAULT_SEED) -> Scenario:
    """
    Build a `Scenario` from its JSON object.

    Raises
    ------
    ScenarioError
        On missing keys, unknown kinds or inconsistent dimensions.
    """
    if not isinstance(info, Mapping):
        raise ScenarioError('A scenario must be a JSON object')
    try:
        dim = int(_require(info, 'dim', 'scenario'))
        params = {str(k): float(v) for k, v in info.get('params', {}).items()}
        barrier = _barrier(_require(info, 'barrier', 'scenario'), dim, params)
        box = info.get('bounding_box')
        return Scenario(
            name=str(info.get('name', 'unnamed')),
            dim=dim,
            dynamics=_dynamics(_require(info, 'dynamics', 'scenario'), dim,
                               params),
            controller=_controller(
                info.get('nominal_controller', {'kind': 'none'}), dim,
                params),
            barrier=barrier,
            P=SpdMatrix(_require(info, 'P', 'scenario')),
            G=SpdMatrix(info['G']) if info.get('G') is not None else None,
            a=float(_require(info, 'a', 'scenario')),
            gamma=_gamma(info.get('gamma', {'kind': 'auto'}), barrier,
                         box if box is not None else barrier.default_box(),
                         seed),
            bounding_box=box,
            params=params,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CbfPdsError):
            raise
        raise ScenarioError(f'Malformed scenario: {exc}') from exc


def load_scenario(source: str, seed: int = DEFAULT_SEED) -> Scenario:
    """
    Load ``builtin:NAME`` or a scenario JSON file.

    Raises
    ------
    ScenarioError
        For unknown built-ins and unreadable or malformed files.
    """
    logger.debug('load_scenario(%r)', source)
    if source.startswith(BUILTIN_PREFIX):
        name = source[len(BUILTIN_PREFIX):]
        try:
            return BUILTINS[name]()
        except KeyError:
            raise ScenarioError(
                f'Unknown built-in scenario {name!r}, choose from '
                f'{sorted(BUILTINS)}'
            ) from None
    try:
        with open(os.fspath(source), 'r') as fd:
            info = json.load(fd)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(
            f'Could not read scenario {source}: {exc}') from exc
    return scenario_from_dict(info, seed=seed)


def dumps_scenario(s: Scenario) -> str:
    """JSON text of a scenario; `scenario_from_dict` reads it back equal."""
    return json.dumps(s.as_dict(), indent=2, sort_keys=True)


def dump_scenario(s: Scenario, path) -> None:
    with open(os.fspath(path), 'w') as fd:
        fd.write(dumps_scenario(s))
        fd.write('\n')
