"""
Shared numerical settings and run configuration.

Tolerances that several modules must agree on live here so that, for example,
the CBF filter, the projected dynamics and the integrators all classify the
same points as boundary points.

Run-level settings (seed, sample counts, step size...) are collected in
`default_config`. Use `get_config` to layer overrides on top of the defaults;
every override is type checked against the `RunConfig` annotations.
"""
from __future__ import annotations

import logging
from typing import Any, TypedDict, Union, get_type_hints

from toolz import merge

logger = logging.getLogger(__name__)

# |h(x)| at or below this counts as membership of the boundary of S
BOUNDARY_TOL = 1e-9
# Barrier gradients with norm at or below this are treated as vanishing
GRADIENT_TOL = 1e-9
# Default seed for every randomized procedure
DEFAULT_SEED = 42
# Sampled constants are multiplied by this to move toward an upper bound
DEFAULT_INFLATION = 1.2
# Default epsilon as a fraction of the minimum boundary gradient norm
DEFAULT_EPS_FRACTION = 0.5
# Inclusion checks pass with this much absolute and relative slack on sigma
INCLUSION_ABS_SLACK = 1e-8
INCLUSION_REL_SLACK = 1e-6
# Integrators give up if the state is still this far outside S after snapping
ESCAPE_TOL = 1e-3
# Number of step halvings tried before snapping a state back to the boundary
MAX_STEP_HALVINGS = 6


class RunConfig(TypedDict):
    seed: int
    samples: int
    pairs: int
    inflation: float
    eps_fraction: float
    dt: float
    t_final: float
    workers: int


default_config: RunConfig = dict(
    seed=DEFAULT_SEED,
    samples=10_000,
    pairs=1_000,
    inflation=DEFAULT_INFLATION,
    eps_fraction=DEFAULT_EPS_FRACTION,
    dt=1e-3,
    t_final=30.0,
    workers=1,
)


def typing_check(value: Any, hint: Any) -> bool:
    """
    A best-effort check if value matches the given type hint.

    Integers are accepted where floats are expected, booleans are never
    accepted as numbers.

    Parameters
    ----------
    value : Any
        Any value to check.
    hint : Any
        A plain class or a ``Union`` of plain classes.

    Returns
    -------
    ok : bool
        True if the value matches the hint, False otherwise.
    """
    if isinstance(value, bool):
        return hint is bool
    if hint is float:
        hint = Union[int, float]
    try:
        return isinstance(value, hint)
    except TypeError:
        ...
    return isinstance(value, hint.__args__)


def get_config(**overrides: Any) -> RunConfig:
    """
    Return the run configuration with ``overrides`` applied.

    Overrides set to ``None`` are ignored so that unset command-line flags can
    be passed straight through.

    Raises
    ------
    KeyError
        If an override names an unknown setting.
    TypeError
        If an override has the wrong type.
    """
    hints = get_type_hints(RunConfig)
    given = {key: value for key, value in overrides.items()
             if value is not None}
    for key, value in given.items():
        if key not in hints:
            raise KeyError(f'Unknown configuration key {key!r}')
        if not typing_check(value, hints[key]):
            raise TypeError(
                f'Incorrect type for {key}={value!r}, '
                f'expected {hints[key].__name__}'
            )
    cfg = merge(default_config, given)
    logger.debug('get_config(%s) -> %s', given, cfg)
    return cfg
