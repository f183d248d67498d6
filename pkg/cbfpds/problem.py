"""
Scenario assembly and validation.

A `Scenario` bundles everything the filters and the bounds need: the open
loop dynamics ``f``, an optional nominal controller ``u0``, the barrier ``h``
whose superlevel set ``S = {h >= 0}`` is the safe set, the projection metric
``P``, an optional contraction metric ``G``, the filter gain ``a`` and the
comparison function ``gamma`` bounding the distance to the boundary by ``h``.

Every piece is immutable. Variants are made with `Scenario.with_`.
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np
from scipy.stats import qmc

from .config import BOUNDARY_TOL, DEFAULT_SEED, GRADIENT_TOL
from .exceptions import (CbfPdsError, DimensionError, ScenarioError,
                         ValidationError)
from .exprfield import (evaluate, gradient, parse_expression, parse_vector,
                        to_text)
from .geometry import SpdMatrix, as_vec, boundary_along_ray, dist_to_boundary

logger = logging.getLogger(__name__)

# Inflation applied to sampled distance envelopes for expression barriers
GAMMA_ENVELOPE_INFLATION = 1.1
# Padding applied to the analytic bounding box of quadratic barriers
BOX_PADDING = 1.05
# Fraction of the box width that counts as touching it
BOX_EDGE_FRACTION = 0.01
# Tolerance on f0(0) for the origin equilibrium check
ORIGIN_EQ_TOL = 1e-9
# Slack allowed in the sampled gamma majorant check
GAMMA_CHECK_SLACK = 1e-8


def _as_matrix(entries, dim: int, name: str) -> np.ndarray:
    arr = np.array(entries, dtype=float)
    if arr.shape != (dim, dim):
        raise DimensionError(
            f'{name} must be {dim}x{dim}, got shape {arr.shape}'
        )
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f'{name} has non-finite entries')
    arr.setflags(write=False)
    return arr


class GammaFn:
    """
    A class-K-infinity comparison function, linear or piecewise linear.

    Use the `linear` and `tabulated` constructors. Tabulated functions
    start at ``(0, 0)``, are strictly increasing on their knots and continue
    past the last knot with the last segment's slope, so they stay unbounded.
    """
    def __init__(self, kind: str, slope: float = None, knots=None):
        self.kind = kind
        if kind == 'linear':
            if not np.isfinite(slope) or slope <= 0:
                raise ScenarioError(
                    f'Gamma slope must be positive, got {slope}'
                )
            self.slope = float(slope)
            self.knots = None
        elif kind == 'table':
            knots = np.array(knots, dtype=float)
            if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < 1:
                raise ScenarioError('Gamma table must be a list of (s, g)')
            if knots[0, 0] != 0 or knots[0, 1] != 0:
                knots = np.vstack([[0.0, 0.0], knots])
            if len(knots) < 2:
                raise ScenarioError('Gamma table needs a knot beyond 0')
            if np.any(np.diff(knots[:, 0]) <= 0) or np.any(
                    np.diff(knots[:, 1]) <= 0):
                raise ScenarioError(
                    'Gamma table must be strictly increasing in both columns'
                )
            knots.setflags(write=False)
            self.knots = knots
            self.slope = None
        else:
            raise ScenarioError(f'Unknown gamma kind {kind!r}')

    @classmethod
    def linear(cls, slope: float) -> GammaFn:
        return cls('linear', slope=slope)

    @classmethod
    def tabulated(cls, knots) -> GammaFn:
        return cls('table', knots=knots)

    @property
    def tail_slope(self) -> float:
        if self.kind == 'linear':
            return self.slope
        (s0, g0), (s1, g1) = self.knots[-2], self.knots[-1]
        return (g1 - g0) / (s1 - s0)

    def __call__(self, s: float) -> float:
        s = float(s)
        if s < 0:
            raise ValueError(f'Gamma is defined on [0, inf), got {s}')
        if self.kind == 'linear':
            return self.slope * s
        s_last, g_last = self.knots[-1]
        if s > s_last:
            return float(g_last + self.tail_slope * (s - s_last))
        return float(np.interp(s, self.knots[:, 0], self.knots[:, 1]))

    def inverse(self, r: float) -> float:
        r = float(r)
        if r < 0:
            raise ValueError(f'Gamma inverse is defined on [0, inf), got {r}')
        if self.kind == 'linear':
            return r / self.slope
        s_last, g_last = self.knots[-1]
        if r > g_last:
            return float(s_last + (r - g_last) / self.tail_slope)
        return float(np.interp(r, self.knots[:, 1], self.knots[:, 0]))

    def as_dict(self) -> dict:
        if self.kind == 'linear':
            return {'kind': 'linear_slope', 'slope': self.slope}
        return {'kind': 'table', 'knots': self.knots.tolist()}

    def __eq__(self, other):
        if not isinstance(other, GammaFn):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __repr__(self):
        if self.kind == 'linear':
            return f'GammaFn.linear({self.slope!r})'
        return f'GammaFn.tabulated({self.knots.tolist()!r})'


class BarrierFunction:
    """
    The barrier ``h`` defining the safe set ``S = {x | h(x) >= 0}``.

    Either quadratic, ``h(x) = c - x^T Q x``, or a parsed expression whose
    gradient is supplied or derived symbolically.
    """
    def __init__(self, kind: str, dim: int, *, c: float = None,
                 Q: SpdMatrix = None, expr=None, grad=None,
                 params: Mapping[str, float] = None,
                 gtol: float = GRADIENT_TOL):
        self.kind = kind
        self.dim = dim
        self.gtol = float(gtol)
        self.params = dict(params or {})
        if kind == 'quadratic':
            if Q.dim != dim:
                raise DimensionError(f'Q is {Q.dim}x{Q.dim}, dim is {dim}')
            if not c > 0:
                raise ScenarioError(
                    f'Quadratic barrier needs c > 0, got {c}'
                )
            self.c = float(c)
            self.Q = Q
        elif kind == 'expr':
            self.expr = expr
            self.grad = tuple(grad) if grad is not None else gradient(
                expr, dim)
            if len(self.grad) != dim:
                raise DimensionError(
                    f'Barrier gradient has {len(self.grad)} components, '
                    f'dim is {dim}'
                )
            self._hess = None
        else:
            raise ScenarioError(f'Unknown barrier kind {kind!r}')

    @classmethod
    def quadratic(cls, c: float, Q, **kwargs) -> BarrierFunction:
        Q = Q if isinstance(Q, SpdMatrix) else SpdMatrix(Q)
        return cls('quadratic', Q.dim, c=c, Q=Q, **kwargs)

    @classmethod
    def expression(cls, text: str, dim: int, *, grad: Sequence[str] = None,
                   params: Mapping[str, float] = None,
                   gtol: float = GRADIENT_TOL) -> BarrierFunction:
        names = tuple(params or ())
        expr = parse_expression(text, dim, names)
        grad_asts = None if grad is None else parse_vector(grad, dim, names)
        return cls('expr', dim, expr=expr, grad=grad_asts, params=params,
                   gtol=gtol)

    @property
    def quadratic_form(self) -> Optional[tuple]:
        """``(c, Q)`` for quadratic barriers, else ``None``."""
        if self.kind == 'quadratic':
            return self.c, self.Q
        return None

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind == 'quadratic':
            return float(self.c - x @ self.Q.entries @ x)
        return evaluate(self.expr, x, self.params)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == 'quadratic':
            return -2.0 * (self.Q.entries @ x)
        return np.array([evaluate(g, x, self.params) for g in self.grad])

    def hessian(self, x) -> np.ndarray:
        if self.kind == 'quadratic':
            return -2.0 * np.asarray(self.Q.entries)
        if self._hess is None:
            self._hess = tuple(gradient(g, self.dim) for g in self.grad)
        x = np.asarray(x, dtype=float)
        return np.array([[evaluate(e, x, self.params) for e in row]
                         for row in self._hess])

    def default_box(self) -> Optional[np.ndarray]:
        """Padded axis-aligned box around the ellipsoid, quadratic only."""
        if self.kind != 'quadratic':
            return None
        Qinv_diag = np.diag(np.linalg.inv(self.Q.entries))
        half = BOX_PADDING * np.sqrt(self.c * Qinv_diag)
        return np.column_stack([-half, half])

    def as_dict(self) -> dict:
        if self.kind == 'quadratic':
            info = {'kind': 'quadratic', 'c': self.c, 'Q': self.Q.tolist()}
        else:
            info = {'kind': 'expr', 'h': to_text(self.expr),
                    'grad': [to_text(g) for g in self.grad]}
        if self.gtol != GRADIENT_TOL:
            info['gtol'] = self.gtol
        return info

    def __repr__(self):
        if self.kind == 'quadratic':
            return f'BarrierFunction.quadratic({self.c!r}, {self.Q!r})'
        return f'BarrierFunction.expression({to_text(self.expr)!r})'


class _VectorField:
    """Shared evaluation for dynamics and controllers."""
    kind: str
    dim: int

    def _setup(self, kind, dim, A=None, b=None, components=None,
               params=None):
        self.kind = kind
        self.dim = dim
        self.params = dict(params or {})
        self.A = None if A is None else _as_matrix(A, dim, 'Matrix')
        self.b = None
        if b is not None:
            self.b = as_vec(b, dim)
            self.b.setflags(write=False)
        self.components = None
        if components is not None:
            self.components = tuple(components)
            if len(self.components) != dim:
                raise DimensionError(
                    f'Field has {len(self.components)} components, '
                    f'dim is {dim}'
                )

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.A is not None:
            out = self.A @ x
            if self.b is not None:
                out = out + self.b
            return out
        if self.components is not None:
            return np.array([evaluate(e, x, self.params)
                             for e in self.components])
        return np.zeros(self.dim)

    def _expr_dict(self):
        return [to_text(e) for e in self.components]


class DynamicsField(_VectorField):
    """Open loop dynamics ``xdot = f(x)``."""
    def __init__(self, kind: str, dim: int, **kwargs):
        if kind not in ('linear', 'affine', 'expr'):
            raise ScenarioError(f'Unknown dynamics kind {kind!r}')
        if kind == 'affine' and kwargs.get('b') is None:
            raise ScenarioError('Affine dynamics need an offset b')
        self._setup(kind, dim, **kwargs)

    @classmethod
    def linear(cls, A) -> DynamicsField:
        A = np.asarray(A, dtype=float)
        return cls('linear', A.shape[0], A=A)

    @classmethod
    def affine(cls, A, b) -> DynamicsField:
        A = np.asarray(A, dtype=float)
        return cls('affine', A.shape[0], A=A, b=b)

    @classmethod
    def expression(cls, texts: Sequence[str], dim: int,
                   params: Mapping[str, float] = None) -> DynamicsField:
        asts = parse_vector(texts, dim, tuple(params or ()))
        return cls('expr', dim, components=asts, params=params)

    @property
    def linear_part(self) -> Optional[np.ndarray]:
        """``A`` for linear dynamics, ``None`` otherwise."""
        return self.A if self.kind == 'linear' else None

    def as_dict(self) -> dict:
        if self.kind == 'linear':
            return {'kind': 'linear', 'A': self.A.tolist()}
        if self.kind == 'affine':
            return {'kind': 'affine', 'A': self.A.tolist(),
                    'b': self.b.tolist()}
        return {'kind': 'expr', 'f': self._expr_dict()}


class NominalController(_VectorField):
    """Nominal feedback ``u0(x)``, designed without the safety constraint."""
    def __init__(self, kind: str, dim: int, **kwargs):
        if kind not in ('none', 'linear', 'expr'):
            raise ScenarioError(f'Unknown controller kind {kind!r}')
        self._setup(kind, dim, **kwargs)

    @classmethod
    def none(cls, dim: int) -> NominalController:
        return cls('none', dim)

    @classmethod
    def linear(cls, K) -> NominalController:
        K = np.asarray(K, dtype=float)
        return cls('linear', K.shape[0], A=K)

    @classmethod
    def expression(cls, texts: Sequence[str], dim: int,
                   params: Mapping[str, float] = None) -> NominalController:
        asts = parse_vector(texts, dim, tuple(params or ()))
        return cls('expr', dim, components=asts, params=params)

    @property
    def K(self) -> Optional[np.ndarray]:
        return self.A

    def as_dict(self) -> dict:
        if self.kind == 'none':
            return {'kind': 'none'}
        if self.kind == 'linear':
            return {'kind': 'linear', 'K': self.A.tolist()}
        return {'kind': 'expr', 'u': self._expr_dict()}


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    Complete description of a safe stabilization problem.

    Parameters
    ----------
    name: ``str``
    dim: ``int``
        State dimension.
    dynamics: `DynamicsField`
    controller: `NominalController`
    barrier: `BarrierFunction`
    P: `SpdMatrix`
        Metric of the safety filter and of the projection.
    G: `SpdMatrix`, optional
        Metric in which ``-f0`` is strongly monotone.
    a: ``float``
        Gain of the filter, positive.
    gamma: `GammaFn`
        Majorant with ``d(x, boundary) <= gamma(h(x))`` on S.
    bounding_box: array, optional
        ``(dim, 2)`` array of lower and upper limits enclosing S. Derived
        for quadratic barriers when omitted, required otherwise.
    params: mapping, optional
        Values of the named parameters used in expressions.
    """
    name: str
    dim: int
    dynamics: DynamicsField
    controller: NominalController
    barrier: BarrierFunction
    P: SpdMatrix
    a: float
    gamma: GammaFn
    G: Optional[SpdMatrix] = None
    bounding_box: Optional[Any] = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for part, label in ((self.dynamics, 'dynamics'),
                            (self.controller, 'controller'),
                            (self.barrier, 'barrier'),
                            (self.P, 'P')):
            if part.dim != self.dim:
                raise DimensionError(
                    f'Scenario {self.name!r} has dim {self.dim} but its '
                    f'{label} has dim {part.dim}'
                )
        if self.G is not None and self.G.dim != self.dim:
            raise DimensionError(
                f'Scenario {self.name!r} has dim {self.dim} but G has dim '
                f'{self.G.dim}'
            )
        if not (np.isfinite(self.a) and self.a > 0):
            raise ScenarioError(f'Gain a must be positive, got {self.a}')
        box = self.bounding_box
        if box is None:
            box = self.barrier.default_box()
            if box is None:
                raise ScenarioError(
                    f'Scenario {self.name!r} needs a bounding_box for its '
                    'expression barrier'
                )
        box = np.array(box, dtype=float)
        if box.shape != (self.dim, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ScenarioError(
                f'Bounding box must be {self.dim} (lower, upper) rows with '
                f'lower < upper, got {box.tolist()}'
            )
        box.setflags(write=False)
        object.__setattr__(self, 'bounding_box', box)
        object.__setattr__(self, 'a', float(self.a))
        object.__setattr__(self, 'params', dict(self.params))

    def with_(self, **changes) -> Scenario:
        """Copy of this scenario with some fields replaced."""
        return replace(self, **changes)

    @property
    def metric(self) -> SpdMatrix:
        """``G`` if given, else ``P``."""
        return self.G if self.G is not None else self.P

    def as_dict(self) -> dict:
        info = {
            'name': self.name,
            'dim': self.dim,
            'dynamics': self.dynamics.as_dict(),
            'nominal_controller': self.controller.as_dict(),
            'barrier': self.barrier.as_dict(),
            'P': self.P.tolist(),
            'a': self.a,
            'gamma': self.gamma.as_dict(),
            'bounding_box': self.bounding_box.tolist(),
        }
        if self.G is not None:
            info['G'] = self.G.tolist()
        if self.params:
            info['params'] = dict(self.params)
        return info

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __repr__(self):
        return f'<Scenario {self.name!r} dim={self.dim} a={self.a}>'


def effective_field(s: Scenario) -> Callable[[np.ndarray], np.ndarray]:
    """
    Closed loop field ``f0 = f + u0`` of the scenario.

    Returns ``f`` itself when there is no nominal controller.
    """
    f = s.dynamics
    u0 = s.controller
    if u0.kind == 'none':
        return f

    def f0(x):
        return f(x) + u0(x)
    return f0


def effective_linear_part(s: Scenario) -> Optional[np.ndarray]:
    """``A + K`` when both the dynamics and the controller are linear."""
    A = s.dynamics.linear_part
    if A is None:
        return None
    if s.controller.kind == 'none':
        return np.asarray(A)
    if s.controller.kind == 'linear':
        return np.asarray(A) + s.controller.K
    return None


def lie_derivative(barrier: BarrierFunction, field_fn, x) -> float:
    """``L_f h(x) = grad h(x)^T f(x)``."""
    x = np.asarray(x, dtype=float)
    return float(barrier.gradient(x) @ field_fn(x))


def gamma_for_quadratic(c: float, Q) -> GammaFn:
    """
    Linear majorant for ``h = c - x^T Q x``.

    On S the distance to the boundary is at most ``h / sqrt(c lam_min(Q))``.
    """
    if not c > 0:
        raise ScenarioError(f'Quadratic barrier needs c > 0, got {c}')
    Q = Q if isinstance(Q, SpdMatrix) else SpdMatrix(Q)
    return GammaFn.linear(1.0 / np.sqrt(c * Q.min_eig))


class SafeSetRegion:
    """
    Sampler for S inside the scenario's bounding box.

    Interior points come from a scrambled Sobol sequence restricted to S by
    rejection. Boundary points come from rays cast from an interior center.
    """
    def __init__(self, barrier: BarrierFunction, box):
        self.barrier = barrier
        self.box = np.asarray(box, dtype=float)
        self.dim = self.box.shape[0]

    @classmethod
    def of(cls, s: Scenario) -> SafeSetRegion:
        return cls(s.barrier, s.bounding_box)

    def contains(self, x, tol: float = BOUNDARY_TOL) -> bool:
        return self.barrier.value(x) >= -tol

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """
        ``n`` quasi-random points of S.

        Raises
        ------
        ScenarioError
            If the box hardly intersects S.
        """
        lower, upper = self.box[:, 0], self.box[:, 1]
        sobol = qmc.Sobol(self.dim, scramble=True, seed=rng)
        found = []
        count = 0
        batch = max(64, int(2 ** np.ceil(np.log2(max(n, 1)))))
        for _ in range(64):
            pts = qmc.scale(sobol.random(batch), lower, upper)
            keep = [p for p in pts if self.barrier.value(p) >= 0]
            found.extend(keep)
            count += batch
            if len(found) >= n:
                return np.array(found[:n])
        raise ScenarioError(
            f'Only {len(found)} of {count} box samples fell inside S'
        )

    def center(self) -> np.ndarray:
        """Origin if it lies in the interior of S, else the box center."""
        origin = np.zeros(self.dim)
        if self.barrier.value(origin) > 0:
            return origin
        mid = self.box.mean(axis=1)
        if self.barrier.value(mid) > 0:
            return mid
        raise ScenarioError('Neither the origin nor the box center is in S')

    def boundary_sample(self, n: int,
                        rng: np.random.Generator) -> np.ndarray:
        """``n`` boundary points hit by random rays from `center`."""
        center = self.center()
        limit = 2.0 * float(np.linalg.norm(self.box[:, 1] - self.box[:, 0]))
        points = []
        for direction in rng.standard_normal((n, self.dim)):
            y = boundary_along_ray(self.barrier, center, direction,
                                   max_length=limit)
            if y is None:
                raise ScenarioError(
                    f'Ray from {center} along {direction} never leaves S '
                    'inside the bounding box'
                )
            points.append(y)
        return np.array(points)


def fit_gamma_envelope(barrier: BarrierFunction, region: SafeSetRegion,
                       samples: int, rng: np.random.Generator,
                       inflation: float = GAMMA_ENVELOPE_INFLATION,
                       bins: int = 32) -> GammaFn:
    """
    Tabulated majorant of the distance to the boundary fitted by sampling.

    The samples are binned by ``h``; each knot takes the largest distance
    seen up to the next bin edge, so the interpolant stays above every
    sample. The knot values are then inflated.
    """
    logger.debug('fit_gamma_envelope(samples=%s, inflation=%s)', samples,
                 inflation)
    pts = region.sample(samples, rng)
    hs = np.array([barrier.value(p) for p in pts])
    ds = np.array([dist_to_boundary(p, barrier) for p in pts])
    hmax = float(hs.max())
    if hmax <= 0:
        raise ScenarioError('Sampled safe set has no interior points')
    edges = np.linspace(0.0, hmax, bins + 1)[1:]
    knots = []
    last = 0.0
    for k, edge in enumerate(edges):
        upto = edges[min(k + 1, bins - 1)]
        seen = ds[hs <= upto]
        value = inflation * (float(seen.max()) if seen.size else 0.0)
        value = max(value, last + 1e-12 * (1.0 + last))
        knots.append((float(edge), value))
        last = value
    logger.info('Fitted gamma envelope with %d knots up to h=%.4g',
                len(knots), hmax)
    return GammaFn.tabulated(knots)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ''
    witness: Optional[list] = None


@dataclass
class ValidationReport:
    """Outcome of `validate_scenario`, one entry per spot-check."""
    scenario: str
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(check.ok for check in self.checks)

    @property
    def failures(self) -> list:
        return [check for check in self.checks if not check.ok]

    def raise_if_failed(self):
        if not self.ok:
            failed = self.failures
            names = ', '.join(check.name for check in failed)
            raise ValidationError(
                f'Scenario {self.scenario!r} failed checks: {names}',
                [(check.name, check.detail, check.witness)
                 for check in failed]
            )

    def as_dict(self) -> dict:
        return {
            'scenario': self.scenario,
            'ok': self.ok,
            'checks': [{'name': c.name, 'ok': c.ok, 'detail': c.detail,
                        'witness': c.witness} for c in self.checks],
        }


def _check(report, name, fn):
    try:
        ok, detail, witness = fn()
    except CbfPdsError as exc:
        logger.debug('Check %s raised', name, exc_info=True)
        ok, detail, witness = False, str(exc), None
    if witness is not None:
        witness = np.asarray(witness, dtype=float).tolist()
    report.checks.append(CheckResult(name, bool(ok), detail, witness))
    if not ok:
        logger.warning('Scenario check %s failed: %s', name, detail)


def validate_scenario(s: Scenario, samples: int = 1000,
                      seed: int = DEFAULT_SEED) -> ValidationReport:
    """
    Numerically spot-check the standing assumptions on a scenario.

    The checks are: the origin lies in the interior of S, S is enclosed by
    the bounding box, the barrier gradient does not vanish on sampled
    boundary points, the origin is an equilibrium of the closed loop, the
    distance to the boundary is bounded by ``gamma(h)`` on sampled points,
    and, if ``G`` is given, ``-f0`` is strongly ``G``-monotone on sampled
    pairs.

    Parameters
    ----------
    s: `Scenario`
    samples: ``int``
        Number of sampled points (and pairs) per check.
    seed: ``int``
        Seed for the sampling.

    Returns
    -------
    report: `ValidationReport`
        Failed checks carry a witness point. Call
        `ValidationReport.raise_if_failed` to turn failures into a
        `ValidationError`.
    """
    logger.debug('validate_scenario(%s, samples=%s, seed=%s)', s.name,
                 samples, seed)
    rng = np.random.default_rng(seed)
    report = ValidationReport(s.name)
    region = SafeSetRegion.of(s)
    barrier = s.barrier
    origin = np.zeros(s.dim)
    f0 = effective_field(s)

    def origin_interior():
        h0 = barrier.value(origin)
        return h0 > 0, f'h(0) = {h0:.6g}', None if h0 > 0 else origin

    def compact():
        pts = region.sample(samples, rng)
        lower, upper = region.box[:, 0], region.box[:, 1]
        margin = BOX_EDGE_FRACTION * (upper - lower)
        touching = np.any((pts < lower + margin) | (pts > upper - margin),
                          axis=1)
        if np.any(touching):
            witness = pts[np.argmax(touching)]
            return False, 'S reaches the edge of the bounding box', witness
        return True, f'{samples} samples inside the box', None

    def boundary_gradient():
        pts = region.boundary_sample(samples, rng)
        norms = np.array([np.linalg.norm(barrier.gradient(p)) for p in pts])
        worst = int(np.argmin(norms))
        ok = norms[worst] > barrier.gtol
        return ok, f'min |grad h| = {norms[worst]:.6g}', (
            None if ok else pts[worst])

    def origin_equilibrium():
        value = np.linalg.norm(f0(origin))
        ok = value <= ORIGIN_EQ_TOL
        return ok, f'|f0(0)| = {value:.3g}', None if ok else origin

    def gamma_majorant():
        pts = region.sample(samples, rng)
        excess = np.array([dist_to_boundary(p, barrier)
                           - s.gamma(max(barrier.value(p), 0.0))
                           for p in pts])
        worst = int(np.argmax(excess))
        ok = excess[worst] <= GAMMA_CHECK_SLACK
        return ok, f'max d - gamma(h) = {excess[worst]:.3g}', (
            None if ok else pts[worst])

    def monotone():
        from .analysis import check_strong_monotonicity
        alpha, witness = check_strong_monotonicity(
            f0, s.G, max(samples, 1000), region, rng, return_witness=True)
        ok = alpha > 0
        return ok, f'alpha_est = {alpha:.6g}', None if ok else witness[0]

    _check(report, 'origin_interior', origin_interior)
    _check(report, 'compact', compact)
    _check(report, 'boundary_gradient', boundary_gradient)
    if s.controller.kind != 'none':
        _check(report, 'origin_equilibrium', origin_equilibrium)
    _check(report, 'gamma_majorant', gamma_majorant)
    if s.G is not None:
        _check(report, 'strong_monotonicity', monotone)
    if report.ok:
        logger.info('Scenario %s passed %d checks', s.name,
                    len(report.checks))
    return report
