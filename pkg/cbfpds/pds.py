"""
Projected dynamical systems on the safe set.

In the interior of S the projected system follows ``f0``. On the boundary
it follows the ``P``-metric projection of ``f0`` onto the tangent cone, which
for a regular barrier is the halfspace ``{v | grad h(x)^T v >= 0}``. Its
solutions are those of the differential inclusion
``xdot in f0(x) - P^-1 N_S(x)``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .config import BOUNDARY_TOL, DEFAULT_SEED
from .exceptions import (GradientVanishesError, NotOnBoundaryError,
                         OutsideSafeSetError)
from .geometry import (ConeKind, ConeRep, SpdMatrix, as_vec, weighted_inner,
                       weighted_norm)
from .problem import SafeSetRegion, Scenario, effective_field

logger = logging.getLogger(__name__)

# Share of sampled points placed on the boundary by check_pds_monotonicity
BOUNDARY_SHARE = 0.3


class Location(enum.Enum):
    INTERIOR = 'interior'
    BOUNDARY = 'boundary'


@dataclass(frozen=True)
class PdsEvaluation:
    """
    One evaluation of the projected field.

    ``multiplier`` is ``min(0, L_f0 h) / ||grad h||^2_{P^-1}``, the
    coefficient of the normal cone element realizing the projection. It is
    zero in the interior and where ``f0`` already points into S.
    """
    x: np.ndarray
    location: Location
    raw: np.ndarray
    output: np.ndarray
    multiplier: float


@dataclass(frozen=True)
class Halfspace:
    """Tangent cone ``{v | normal^T v >= 0}`` at a regular boundary point."""
    normal: np.ndarray

    def contains(self, v, tol: float = 1e-9) -> bool:
        return float(self.normal @ np.asarray(v, dtype=float)) >= -tol


def _classify(barrier, x, strict=True) -> Location:
    h = barrier.value(x)
    if h > BOUNDARY_TOL:
        return Location.INTERIOR
    if strict and h < -BOUNDARY_TOL:
        raise OutsideSafeSetError(
            f'x={x.tolist()} is outside the safe set, h(x)={h:.6g}'
        )
    return Location.BOUNDARY


def _boundary_gradient(barrier, x) -> np.ndarray:
    grad = barrier.gradient(x)
    if np.linalg.norm(grad) <= barrier.gtol:
        raise GradientVanishesError(
            f'Barrier gradient vanishes at boundary point {x.tolist()}'
        )
    return grad


def tangent_halfspace(barrier, x) -> Halfspace:
    """
    Tangent cone of S at a boundary point.

    Raises
    ------
    NotOnBoundaryError
        If ``|h(x)| > BOUNDARY_TOL``.
    GradientVanishesError
        If the gradient vanishes at ``x``.
    """
    x = as_vec(x, barrier.dim)
    h = barrier.value(x)
    if abs(h) > BOUNDARY_TOL:
        raise NotOnBoundaryError(
            f'x={x.tolist()} is not on the boundary, h(x)={h:.6g}'
        )
    return Halfspace(_boundary_gradient(barrier, x))


def normal_cone(barrier, x) -> ConeRep:
    """
    Normal cone of S at ``x``.

    The zero cone in the interior, the ray ``{lam grad h(x) | lam <= 0}``
    within ``BOUNDARY_TOL`` of the boundary.
    """
    x = as_vec(x, barrier.dim)
    if _classify(barrier, x) is Location.INTERIOR:
        return ConeRep(ConeKind.ZERO)
    return ConeRep(ConeKind.RAY, _boundary_gradient(barrier, x))


def _tangent_projection(P: SpdMatrix, grad, v):
    direction = P.solve(grad)
    slope = float(grad @ v)
    multiplier = min(0.0, slope) / float(grad @ direction)
    return v - multiplier * direction, multiplier


def project_onto_tangent(s: Scenario, x, v) -> np.ndarray:
    """
    ``P``-metric projection of a velocity ``v`` onto the tangent cone at ``x``.

    Interior points have the whole space as tangent cone and return ``v``.
    """
    x = as_vec(x, s.dim)
    v = as_vec(v, s.dim)
    if _classify(s.barrier, x) is Location.INTERIOR:
        return v
    grad = _boundary_gradient(s.barrier, x)
    return _tangent_projection(s.P, grad, v)[0]


class _Projected:
    def __init__(self, s: Scenario):
        self.f0 = effective_field(s)
        self.barrier = s.barrier
        self.P = s.P

    def evaluate(self, x: np.ndarray, strict: bool = True) -> PdsEvaluation:
        location = _classify(self.barrier, x, strict)
        raw = np.asarray(self.f0(x), dtype=float)
        if location is Location.INTERIOR:
            return PdsEvaluation(x, location, raw, raw, 0.0)
        grad = _boundary_gradient(self.barrier, x)
        output, multiplier = _tangent_projection(self.P, grad, raw)
        return PdsEvaluation(x, location, raw, output, multiplier)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x, strict=False).output


def pds_vector_field(s: Scenario):
    """Projected field as ``x -> xdot``; points outside S count as boundary."""
    return _Projected(s)


def pds_field(s: Scenario, x) -> PdsEvaluation:
    """
    Evaluate the projected dynamical system at ``x``.

    Raises
    ------
    OutsideSafeSetError
        If ``h(x) < -BOUNDARY_TOL``.
    GradientVanishesError
        If the gradient vanishes at a boundary point.
    """
    x = as_vec(x, s.dim)
    return _Projected(s).evaluate(x)


def di_residual(s: Scenario, x, v) -> float:
    """
    Euclidean distance from ``v`` to the inclusion's right-hand side at ``x``.

    On the boundary that set is the ray
    ``{f0(x) + t P^-1 grad h(x) | t >= 0}``,
    in the interior the single point ``f0(x)``.
    """
    x = as_vec(x, s.dim)
    v = as_vec(v, s.dim)
    raw = np.asarray(effective_field(s)(x), dtype=float)
    offset = v - raw
    if _classify(s.barrier, x) is Location.INTERIOR:
        return float(np.linalg.norm(offset))
    d = s.P.solve(_boundary_gradient(s.barrier, x))
    t = max(0.0, float(offset @ d) / float(d @ d))
    return float(np.linalg.norm(offset - t * d))


def check_pds_monotonicity(s: Scenario, G: SpdMatrix = None,
                           pairs: int = 1000,
                           seed: int = DEFAULT_SEED) -> float:
    """
    Sampled strong monotonicity modulus of the projected inclusion.

    Draws pairs of points in S, a share of them on the boundary, picks an
    element ``g(x) = f0(x) - lam G^-1 grad h(x)`` of the inclusion with a
    random ``lam <= 0`` on boundary points, and returns the smallest ratio
    ``<x - y | -(g(x) - g(y))>_G / ||x - y||^2_G``. A positive value is
    empirical evidence that the projected system in the ``G`` metric is
    strongly monotone when ``-f0`` is.
    """
    G = s.metric if G is None else G
    logger.debug('check_pds_monotonicity(%s, pairs=%s)', s.name, pairs)
    rng = np.random.default_rng(seed)
    region = SafeSetRegion.of(s)
    f0 = effective_field(s)
    n_edge = int(BOUNDARY_SHARE * 2 * pairs)
    pts = np.vstack([region.sample(2 * pairs - n_edge, rng),
                     region.boundary_sample(n_edge, rng)])
    pts = pts[rng.permutation(len(pts))]

    def element(x):
        value = np.asarray(f0(x), dtype=float)
        if abs(s.barrier.value(x)) <= BOUNDARY_TOL:
            lam = -rng.exponential(1.0)
            value = value - lam * G.solve(s.barrier.gradient(x))
        return value

    worst = np.inf
    for x, y in zip(pts[0::2], pts[1::2]):
        diff = x - y
        denom = weighted_norm(diff, G) ** 2
        if denom == 0:
            continue
        ratio = weighted_inner(diff, -(element(x) - element(y)), G) / denom
        worst = min(worst, ratio)
    return float(worst)
