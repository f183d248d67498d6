"""
Dense small-dimension linear algebra for the safe-set geometry.

This holds the symmetric positive-definite matrix type used for every metric
in the package, the weighted inner products and norms built on it, and the
projections onto the safe set ``S = {x | h(x) >= 0}`` and onto its boundary.

Barriers are duck-typed: anything with ``value``, ``gradient`` and
``hessian`` methods works. A barrier that also exposes a non-``None``
``quadratic_form`` property, returning ``(c, Q)`` for ``h = c - x^T Q x``,
is projected through the secular equation instead of the generic KKT Newton
iteration.
"""
from __future__ import annotations

import enum
import functools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .config import BOUNDARY_TOL, GRADIENT_TOL
from .exceptions import (DimensionError, GradientVanishesError,
                         NotPositiveDefiniteError, ProjectionError)

logger = logging.getLogger(__name__)

# Relative tolerance for the symmetry check on SpdMatrix input
SYMMETRY_TOL = 1e-12
# Iteration cap for the KKT Newton projection
MAX_NEWTON_ITER = 60
# KKT residual accepted by the projections
KKT_TOL = 1e-9
# Largest ray length searched when locating the boundary along a ray
MAX_RAY_LENGTH = 1e6


def as_vec(x, dim: Optional[int] = None) -> np.ndarray:
    """
    Convert ``x`` to a finite 1-D float array, optionally checking its length.

    Raises
    ------
    DimensionError
        If ``x`` is not one-dimensional or has the wrong length.
    ValueError
        If any entry is NaN or infinite.
    """
    vec = np.asarray(x, dtype=float)
    if vec.ndim != 1:
        raise DimensionError(f'Expected a vector, got shape {vec.shape}')
    if dim is not None and vec.shape[0] != dim:
        raise DimensionError(
            f'Expected a vector of length {dim}, got {vec.shape[0]}'
        )
    if not np.all(np.isfinite(vec)):
        raise ValueError(f'Vector has non-finite entries: {vec}')
    return vec


class SpdMatrix:
    """
    Immutable symmetric positive-definite matrix.

    The Cholesky factor and the eigenvalues are computed once at
    construction. A failed factorization is how non-SPD input is detected.

    Parameters
    ----------
    entries: array-like
        Square matrix, symmetric to within ``SYMMETRY_TOL`` relative.
        It is symmetrized exactly before factorization.
    """
    def __init__(self, entries):
        arr = np.array(entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f'Expected a square matrix, got {arr.shape}')
        if not np.all(np.isfinite(arr)):
            raise NotPositiveDefiniteError('Matrix has non-finite entries')
        scale = max(np.max(np.abs(arr)), np.finfo(float).tiny)
        if np.max(np.abs(arr - arr.T)) > SYMMETRY_TOL * scale:
            raise NotPositiveDefiniteError(f'Matrix is not symmetric: {arr}')
        arr = 0.5 * (arr + arr.T)
        try:
            chol = scipy.linalg.cholesky(arr, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                f'Matrix is not positive definite: {arr.tolist()}'
            ) from exc
        eigvals = scipy.linalg.eigvalsh(arr)
        if eigvals[0] <= 0:
            raise NotPositiveDefiniteError(
                f'Matrix has nonpositive eigenvalue {eigvals[0]}'
            )
        for item in (arr, chol, eigvals):
            item.setflags(write=False)
        self._entries = arr
        self._chol = chol
        self._eigvals = eigvals

    @classmethod
    def identity(cls, dim: int) -> SpdMatrix:
        return cls(np.eye(dim))

    @classmethod
    def diag(cls, values) -> SpdMatrix:
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        """Read-only view of the matrix entries."""
        return self._entries

    @property
    def cholesky(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``P = L L^T``."""
        return self._chol

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order."""
        return self._eigvals

    @property
    def min_eig(self) -> float:
        return float(self._eigvals[0])

    @property
    def max_eig(self) -> float:
        return float(self._eigvals[-1])

    def solve(self, b) -> np.ndarray:
        """Return ``v`` with ``P v = b``."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.dim:
            raise DimensionError(
                f'Cannot solve {self.dim}x{self.dim} system with rhs of '
                f'length {b.shape[0]}'
            )
        return scipy.linalg.cho_solve((self._chol, True), b,
                                      check_finite=False)

    def inverse_quadratic(self, v) -> float:
        """Return ``||v||^2`` in the ``P^-1`` metric, i.e. ``v^T P^-1 v``."""
        v = np.asarray(v, dtype=float)
        return float(v @ self.solve(v))

    def tolist(self) -> list:
        return self._entries.tolist()

    def __eq__(self, other):
        if not isinstance(other, SpdMatrix):
            return NotImplemented
        return np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash(self._entries.tobytes())

    def __repr__(self):
        return f'SpdMatrix({self._entries.tolist()})'


def _check_pair(x, y, P: SpdMatrix):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (x.shape == y.shape == (P.dim,)):
        raise DimensionError(
            f'Dimension mismatch: x{x.shape}, y{y.shape}, P is {P.dim}x{P.dim}'
        )
    return x, y


def weighted_inner(x, y, P: SpdMatrix) -> float:
    """
    Return ``<x|y>_P = x^T P y``.

    Raises
    ------
    DimensionError
        If the vector lengths do not match ``P``.
    """
    x, y = _check_pair(x, y, P)
    return float(x @ P.entries @ y)


def weighted_norm(x, P: SpdMatrix) -> float:
    """Return ``||x||_P``."""
    return float(np.sqrt(max(weighted_inner(x, x, P), 0.0)))


def solve_spd(P: SpdMatrix, b) -> np.ndarray:
    """
    Solve ``P v = b`` using the cached Cholesky factor of ``P``.

    Non-SPD input never reaches this point: it is rejected when the
    `SpdMatrix` is constructed.
    """
    return P.solve(as_vec(b, P.dim))


class ConeKind(enum.Enum):
    ZERO = 'zero'
    RAY = 'ray'


@dataclass(frozen=True)
class ConeRep:
    """
    Normal cone of S at a point.

    ``ZERO`` is the trivial cone of an interior point. ``RAY`` is
    ``{lam * generator | lam <= 0}`` with ``generator`` the barrier gradient.
    """
    kind: ConeKind
    generator: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind is ConeKind.RAY:
            if self.generator is None:
                raise ValueError('A ray cone needs a generator')
            if np.linalg.norm(self.generator) <= GRADIENT_TOL:
                raise GradientVanishesError(
                    'Ray cone generator has vanishing norm'
                )
        elif self.generator is not None:
            raise ValueError('The zero cone has no generator')

    def contains(self, v, tol: float = 1e-9) -> bool:
        """True if ``v`` is (numerically) an element of the cone."""
        v = np.asarray(v, dtype=float)
        if self.kind is ConeKind.ZERO:
            return bool(np.linalg.norm(v) <= tol)
        g = self.generator
        lam = float(v @ g) / float(g @ g)
        return lam <= tol and bool(np.linalg.norm(v - lam * g) <= tol * (
            1 + np.linalg.norm(v)))


@functools.lru_cache(maxsize=64)
def _ellipsoid_frame(Q: SpdMatrix, P: Optional[SpdMatrix]):
    """
    Eigen-frame of ``Q' = L^-1 Q L^-T`` where ``P = L L^T``.

    In coordinates ``w = L^T y`` the P-metric projection onto
    ``{y^T Q y = c}`` becomes a Euclidean projection onto
    ``{w^T Q' w = c}``.
    """
    if P is None:
        L = np.eye(Q.dim)
        Qw = Q.entries
    else:
        L = P.cholesky
        tmp = scipy.linalg.solve_triangular(L, Q.entries, lower=True)
        Qw = scipy.linalg.solve_triangular(L, tmp.T, lower=True).T
        Qw = 0.5 * (Qw + Qw.T)
    lam, V = scipy.linalg.eigh(Qw)
    return L, lam, V


def _secular_root(lam: np.ndarray, z: np.ndarray, c: float) -> np.ndarray:
    """
    Closest point to ``z`` on ``{u | sum(lam * u**2) = c}`` (diagonal frame).

    Solves ``phi(mu) = sum(lam z^2 / (1 + mu lam)^2) - c = 0`` with a
    bracketing root finder and polishes with Newton steps. The point is then
    ``u = z / (1 + mu lam)``.
    """
    z = z.copy()

    def phi(mu):
        nz = z != 0
        return float(np.sum(lam[nz] * z[nz]**2 / (1.0 + mu * lam[nz])**2)
                     - c)

    def dphi(mu):
        nz = z != 0
        return float(-2.0 * np.sum(lam[nz]**2 * z[nz]**2
                                   / (1.0 + mu * lam[nz])**3))

    q0 = float(np.sum(lam * z**2))
    if q0 == c:
        return z
    lam_max = lam[-1]
    if q0 > c:
        lo, hi = 0.0, 1.0 / lam[0]
        while phi(hi) > 0:
            lo, hi = hi, 2.0 * hi
            if hi > 1e300:
                raise ProjectionError('Secular equation bracket overflow')
    else:
        top = np.isclose(lam, lam_max, rtol=1e-12, atol=0.0)
        ztop = float(np.linalg.norm(z[top]))
        hi = 0.0
        lo = None
        pole = -1.0 / lam_max
        if ztop > 1e-14 * (1.0 + float(np.linalg.norm(z))):
            for k in range(1, 17):
                trial = -(1.0 - 10.0**-k) / lam_max
                if phi(trial) > 0:
                    lo = trial
                    break
        else:
            z[top] = 0.0
            if phi(pole) > 0:
                lo = pole
        if lo is None:
            # The hard case: the nearest points sit on the top eigenspace
            # and the multiplier is pinned at -1 / lam_max.
            mu = -1.0 / lam_max
            u = np.zeros_like(z)
            rest = ~top
            u[rest] = z[rest] / (1.0 + mu * lam[rest])
            remaining = max(c - float(np.sum(lam[rest] * u[rest]**2)), 0.0)
            t = np.sqrt(remaining / lam_max)
            if ztop > 0:
                u[top] = t * z[top] / ztop
            else:
                u[np.argmax(top)] = t
            logger.debug('Secular equation hard case, mu=%s', mu)
            return u
    try:
        mu = brentq(phi, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps,
                    maxiter=500)
    except (ValueError, RuntimeError) as exc:
        raise ProjectionError(
            f'Secular equation root finding failed on [{lo}, {hi}]'
        ) from exc
    for _ in range(3):
        slope = dphi(mu)
        if slope == 0:
            break
        polished = mu - phi(mu) / slope
        if not (min(lo, hi) <= polished <= max(lo, hi)):
            break
        if abs(phi(polished)) >= abs(phi(mu)):
            break
        mu = polished
    u = z / (1.0 + mu * lam)
    q = float(np.sum(lam * u**2))
    if q > 0:
        u = u * np.sqrt(c / q)
    return u


def _project_quadratic(x: np.ndarray, c: float, Q: SpdMatrix,
                       P: Optional[SpdMatrix]) -> np.ndarray:
    L, lam, V = _ellipsoid_frame(Q, P)
    z = V.T @ (L.T @ x)
    u = _secular_root(lam, z, c)
    return scipy.linalg.solve_triangular(L.T, V @ u, lower=False)


def boundary_along_ray(barrier, base, direction,
                       max_length: float = MAX_RAY_LENGTH
                       ) -> Optional[np.ndarray]:
    """
    First zero of ``h`` along ``base + t * direction`` for ``t > 0``.

    The sign of ``h(base)`` decides whether an exit or an entry is searched
    for. Returns ``None`` if the ray never crosses the boundary within
    ``max_length``.
    """
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if norm == 0:
        return None
    direction = direction / norm
    h0 = barrier.value(base)
    if h0 == 0:
        return base.copy()
    sign = np.sign(h0)

    def along(t):
        return barrier.value(base + t * direction)

    lo, hi = 0.0, 1e-3
    while sign * along(hi) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > max_length:
            return None
    t = brentq(along, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
               maxiter=500)
    return base + t * direction


def _kkt_newton(x: np.ndarray, barrier, Pmat: np.ndarray,
                y0: np.ndarray) -> Optional[np.ndarray]:
    """
    Newton on the KKT system ``P(y - x) = mu grad h(y)``, ``h(y) = 0``.

    Returns the converged point or ``None``.
    """
    n = x.shape[0]
    y = y0.copy()
    g = barrier.gradient(y)
    gg = float(g @ g)
    if gg <= GRADIENT_TOL**2:
        return None
    mu = float(g @ (Pmat @ (y - x))) / gg

    def residual(yy, mm):
        return np.concatenate([Pmat @ (yy - x) - mm * barrier.gradient(yy),
                               [barrier.value(yy)]])

    res = residual(y, mu)
    scale = 1.0 + np.linalg.norm(x)
    for _ in range(MAX_NEWTON_ITER):
        if np.linalg.norm(res) <= 1e-13 * scale:
            break
        g = barrier.gradient(y)
        jac = np.zeros((n + 1, n + 1))
        jac[:n, :n] = Pmat - mu * barrier.hessian(y)
        jac[:n, n] = -g
        jac[n, :n] = g
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        alpha = 1.0
        for _ in range(30):
            y_try = y + alpha * step[:n]
            mu_try = mu + alpha * step[n]
            try:
                res_try = residual(y_try, mu_try)
            except ArithmeticError:
                res_try = None
            if res_try is not None and (
                    np.linalg.norm(res_try) < np.linalg.norm(res)):
                break
            alpha *= 0.5
        else:
            break
        y, mu, res = y_try, mu_try, res_try
    if abs(barrier.value(y)) > BOUNDARY_TOL:
        return None
    g = barrier.gradient(y)
    if np.linalg.norm(g) <= GRADIENT_TOL:
        return None
    stationarity = Pmat @ (y - x) - mu * g
    if np.linalg.norm(stationarity) > KKT_TOL * scale:
        return None
    return y


def _kkt_seeds(x: np.ndarray, barrier, Pmat: np.ndarray) -> list:
    seeds = []
    n = x.shape[0]
    g = barrier.gradient(x)
    hx = barrier.value(x)
    directions = []
    if np.linalg.norm(g) > GRADIENT_TOL:
        step = np.linalg.solve(Pmat, g)
        # Move against the gradient from inside, along it from outside
        directions.append((x, -step if hx > 0 else step))
    if np.linalg.norm(x) > 0:
        directions.append((np.zeros(n), x))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        directions.append((x, e))
        directions.append((x, -e))
    for base, direction in directions:
        try:
            y0 = boundary_along_ray(barrier, base, direction)
        except (ValueError, ArithmeticError):
            y0 = None
        if y0 is not None:
            seeds.append(y0)
    return seeds


def _project_generic(x: np.ndarray, barrier, P: Optional[SpdMatrix]):
    Pmat = np.eye(x.shape[0]) if P is None else P.entries
    best, best_dist = None, np.inf
    for y0 in _kkt_seeds(x, barrier, Pmat):
        y = _kkt_newton(x, barrier, Pmat, y0)
        if y is None:
            continue
        dist = float((y - x) @ Pmat @ (y - x))
        if dist < best_dist:
            best, best_dist = y, dist
    if best is None:
        raise ProjectionError(f'KKT projection did not converge from x={x}')
    return best


def _project_boundary(x: np.ndarray, barrier,
                      P: Optional[SpdMatrix]) -> np.ndarray:
    if abs(barrier.value(x)) <= BOUNDARY_TOL:
        return x.copy()
    quad = getattr(barrier, 'quadratic_form', None)
    if quad is not None:
        c, Q = quad
        y = _project_quadratic(x, c, Q, P)
    else:
        y = _project_generic(x, barrier, P)
    if abs(barrier.value(y)) > BOUNDARY_TOL:
        raise ProjectionError(
            f'Boundary projection of {x} missed the boundary: '
            f'h(y)={barrier.value(y)}'
        )
    if np.linalg.norm(barrier.gradient(y)) <= GRADIENT_TOL:
        raise GradientVanishesError(f'Barrier gradient vanishes at {y}')
    return y


def proj_boundary_euclidean(x, barrier) -> np.ndarray:
    """
    Euclidean projection of ``x`` onto the boundary ``{h = 0}``.

    Points already within ``BOUNDARY_TOL`` of the boundary are returned
    unchanged. Exterior points are accepted too; they land on the nearest
    boundary point, which is also their projection onto S.

    Raises
    ------
    ProjectionError
        If the root finder or the KKT iteration fails.
    GradientVanishesError
        If the gradient vanishes at the computed point.
    """
    return _project_boundary(as_vec(x), barrier, None)


def proj_boundary_weighted(x, P: SpdMatrix, barrier) -> np.ndarray:
    """
    `proj_boundary_euclidean` in the ``P``-norm.

    Used to keep states that slide along the boundary on it.
    """
    return _project_boundary(as_vec(x, P.dim), barrier, P)


def proj_set_weighted(x, P: SpdMatrix, barrier) -> np.ndarray:
    """
    Projection of ``x`` onto S in the ``P``-norm.

    Returns ``x`` itself when ``h(x) >= 0``. Otherwise the minimizer of
    ``||x - y||_P`` over S, which lies on the boundary.
    """
    x = as_vec(x, P.dim)
    if barrier.value(x) >= 0:
        return x
    quad = getattr(barrier, 'quadratic_form', None)
    if quad is not None:
        c, Q = quad
        y = _project_quadratic(x, c, Q, P)
    else:
        y = _project_generic(x, barrier, P)
    if abs(barrier.value(y)) > BOUNDARY_TOL:
        raise ProjectionError(
            f'Weighted projection of {x} missed the boundary: '
            f'h(y)={barrier.value(y)}'
        )
    return y


def dist_to_boundary(x, barrier) -> float:
    """Euclidean distance from ``x`` to the boundary of S."""
    x = as_vec(x)
    return float(np.linalg.norm(x - proj_boundary_euclidean(x, barrier)))
