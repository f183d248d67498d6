"""
The CBF-QP safety filter.

For a closed loop field ``f0`` the filter solves::

    min_mu ||mu - f0(x)||_P^2   s.t.   grad h(x)^T mu + a h(x) >= 0

whose single constraint gives the closed form::

    f_cbf(x) = f0(x) - min(0, L_f h(x) + a h(x)) P^-1 grad h(x)
                       / ||grad h(x)||^2_{P^-1}

`cbf_field` evaluates the closed form. `qp_oracle` solves the same problem
through its KKT system and serves as an independent cross-check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import BOUNDARY_TOL, GRADIENT_TOL
from .exceptions import ActiveGradientVanishesError, OutsideSafeSetError
from .geometry import SpdMatrix, as_vec
from .problem import Scenario, effective_field

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CbfEvaluation:
    """
    One evaluation of the filtered field.

    Attributes
    ----------
    x: array
        State.
    raw: array
        Unfiltered closed loop field ``f0(x)``.
    h: float
        Barrier value.
    lfh: float
        Lie derivative ``L_f0 h(x)``.
    active: bool
        True on ``{L_f0 h + a h <= 0}``.
    output: array
        Filtered field value.
    """
    x: np.ndarray
    raw: np.ndarray
    h: float
    lfh: float
    active: bool
    output: np.ndarray


class _Filter:
    """Closed form of the filter for fixed scenario data."""
    def __init__(self, s: Scenario, a: float = None):
        self.f0 = effective_field(s)
        self.barrier = s.barrier
        self.P = s.P
        self.a = s.a if a is None else float(a)
        self.gtol = s.barrier.gtol

    def evaluate(self, x: np.ndarray, strict: bool = True) -> CbfEvaluation:
        h = self.barrier.value(x)
        if strict and h < -BOUNDARY_TOL:
            raise OutsideSafeSetError(
                f'x={x.tolist()} is outside the safe set, h(x)={h:.6g}'
            )
        raw = np.asarray(self.f0(x), dtype=float)
        grad = self.barrier.gradient(x)
        lfh = float(grad @ raw)
        term = lfh + self.a * h
        if term > 0:
            return CbfEvaluation(x, raw, h, lfh, False, raw)
        if np.linalg.norm(grad) <= self.gtol:
            raise ActiveGradientVanishesError(
                f'Filter is active at x={x.tolist()} where the barrier '
                'gradient vanishes'
            )
        direction = self.P.solve(grad)
        output = raw - term * direction / float(grad @ direction)
        return CbfEvaluation(x, raw, h, lfh, True, output)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x, strict=False).output


def cbf_vector_field(s: Scenario,
                     a: float = None) -> Callable[[np.ndarray], np.ndarray]:
    """
    Filtered field as a plain ``x -> xdot`` function.

    Points slightly outside S are evaluated with the same closed form, which
    is what integrator stages and Newton iterates need.
    """
    return _Filter(s, a)


def cbf_field(s: Scenario, x, *, a: float = None,
              strict: bool = True) -> CbfEvaluation:
    """
    Evaluate the safety-filtered closed loop at ``x``.

    Parameters
    ----------
    s: `Scenario`
    x: array-like
        State, inside S up to ``BOUNDARY_TOL``.
    a: ``float``, optional
        Filter gain overriding ``s.a``.
    strict: ``bool``, optional
        If False, points outside S are evaluated instead of rejected.

    Raises
    ------
    OutsideSafeSetError
        If ``h(x) < -BOUNDARY_TOL`` and ``strict``.
    ActiveGradientVanishesError
        If the constraint is active where the barrier gradient vanishes.
    """
    x = as_vec(x, s.dim)
    return _Filter(s, a).evaluate(x, strict=strict)


def cbf_filter_input(s: Scenario, x, *, a: float = None) -> np.ndarray:
    """
    Safe input ``u`` with ``f(x) + u`` equal to the filtered field.

    Equals the nominal input ``u0(x)`` wherever the filter is inactive.
    """
    x = as_vec(x, s.dim)
    evaluation = _Filter(s, a).evaluate(x)
    return evaluation.output - s.dynamics(x)


def is_active(s: Scenario, x, *, a: float = None) -> bool:
    """True if ``x`` lies in the region where the filter modifies ``f0``."""
    x = as_vec(x, s.dim)
    a = s.a if a is None else a
    f0 = effective_field(s)
    lfh = float(s.barrier.gradient(x) @ f0(x))
    return lfh + a * s.barrier.value(x) <= 0


def qp_oracle(fnom, gradh, h: float, a: float, P: SpdMatrix) -> np.ndarray:
    """
    Solve the one-constraint filter QP through its KKT conditions.

    If the unconstrained minimizer ``fnom`` is feasible it is returned.
    Otherwise the constraint is active and::

        [ 2P   -g ] [ mu  ]   [ 2P fnom ]
        [ g^T   0 ] [ lam ] = [ -a h    ]

    is solved directly for the minimizer and its multiplier.

    Raises
    ------
    ActiveGradientVanishesError
        If the constraint is violated at ``fnom`` and ``gradh`` vanishes.
    """
    fnom = as_vec(fnom, P.dim)
    g = as_vec(gradh, P.dim)
    if g @ fnom + a * h >= 0:
        return fnom
    if np.linalg.norm(g) <= GRADIENT_TOL:
        raise ActiveGradientVanishesError(
            'Constraint is violated and its gradient vanishes'
        )
    n = P.dim
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * P.entries
    kkt[:n, n] = -g
    kkt[n, :n] = g
    rhs = np.concatenate([2.0 * P.entries @ fnom, [-a * h]])
    solution = np.linalg.solve(kkt, rhs)
    mu, lam = solution[:n], solution[n]
    if lam < 0:
        logger.debug('KKT multiplier %s is negative', lam)
    return mu
