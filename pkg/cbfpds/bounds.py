"""
Constants and checks of the Krasovskii-type perturbation bound.

For gains ``a >= a_star`` the CBF-filtered field at any ``x`` in S lies in
the projected inclusion evaluated on a ball of radius ``sigma(a, x)`` around
``x``, inflated by the same radius. This module estimates every constant the
radius depends on, evaluates ``sigma`` and checks the inclusion pointwise by
constructing its witness explicitly.

Constants with a closed form (quadratic barriers, linear fields) are computed
exactly. The others are sampled and multiplied by an inflation factor; the
`ConstantsBundle.provenance` records which is which.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.optimize import minimize
from toolz import partition_all

from .config import (BOUNDARY_TOL, DEFAULT_EPS_FRACTION, DEFAULT_INFLATION,
                     DEFAULT_SEED, INCLUSION_ABS_SLACK, INCLUSION_REL_SLACK)
from .exceptions import BoundsError, ScenarioError
from .geometry import as_vec, boundary_along_ray, proj_boundary_euclidean
from .problem import (BarrierFunction, GammaFn, SafeSetRegion, Scenario,
                      effective_field, effective_linear_part)

logger = logging.getLogger(__name__)

# Minimum number of pairs for a Lipschitz estimate
MIN_PAIRS = 1000
# Minimum number of boundary samples for the gradient norm extrema
MIN_SAMPLES = 1000
# Candidates polished locally when maximizing |L_f h| by sampling
POLISH_CANDIDATES = 10
# Relative size of the local perturbations used for Lipschitz pairs
LOCAL_STEP = 1e-3


def sampled(n: int, inflation: float) -> dict:
    return {'kind': 'sampled', 'n': int(n), 'inflation': float(inflation)}


@dataclass(frozen=True)
class ConstantsBundle:
    """
    Every quantity entering the perturbation radius.

    Attributes
    ----------
    eps: float
        Lower bound kept on the gradient norm over the active region.
    M1, M2: float
        Smallest and largest gradient norm over the boundary of S.
    M3: float
        Upper bound on the gradient norm over the active region.
    L_gradh: float
        Lipschitz constant of the barrier gradient on S.
    L_f: float
        Lipschitz constant of the closed loop field on S.
    maxLfh: float
        Maximum of ``|L_f h|`` over S.
    a_star: float
        Smallest gain for which the bound holds.
    L1: float
        Lipschitz constant of the normalized gradient direction.
    gamma: GammaFn
    eps_fraction: float
    provenance: dict
        ``'analytic'`` or ``{'kind': 'sampled', 'n': ..., 'inflation': ...}``
        for each estimated constant.
    """
    eps: float
    M1: float
    M2: float
    M3: float
    L_gradh: float
    L_f: float
    maxLfh: float
    a_star: float
    L1: float
    gamma: GammaFn
    eps_fraction: float = DEFAULT_EPS_FRACTION
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        values = (self.eps, self.M1, self.M2, self.M3, self.L_gradh,
                  self.L_f, self.maxLfh, self.a_star, self.L1)
        if not all(np.isfinite(values)):
            raise BoundsError(f'Non-finite constants: {self.as_dict()}')
        if not 0 < self.eps < self.M1:
            raise BoundsError(
                f'Need 0 < eps < M1, got eps={self.eps}, M1={self.M1}'
            )
        if not self.M1 <= self.M2 <= self.M3:
            raise BoundsError(
                f'Need M1 <= M2 <= M3, got {self.M1}, {self.M2}, {self.M3}'
            )
        if self.a_star < 0 or self.L1 <= 0:
            raise BoundsError(
                f'Need a_star >= 0 and L1 > 0, got {self.a_star}, {self.L1}'
            )

    def as_dict(self) -> dict:
        return {
            'eps': self.eps,
            'eps_fraction': self.eps_fraction,
            'M1': self.M1,
            'M2': self.M2,
            'M3': self.M3,
            'L_gradh': self.L_gradh,
            'L_f': self.L_f,
            'maxLfh': self.maxLfh,
            'a_star': self.a_star,
            'L1': self.L1,
            'gamma': self.gamma.as_dict(),
            'provenance': dict(self.provenance),
        }


@dataclass(frozen=True)
class InclusionReport:
    """
    Pointwise outcome of `check_inclusion`.

    ``case`` is ``'inactive'`` or ``'active'``. In the active case ``y`` is
    the nearest boundary point and ``eta`` the normal cone element at ``y``
    whose image under the inclusion is compared with the filtered field.
    ``dist_xy`` is held to ``radius = gamma(|L_f h| / a)`` and
    ``dist_field`` to ``sigma1``; ``margin`` is the smaller of the two gaps.
    """
    x: np.ndarray
    case: str
    y: np.ndarray
    eta: np.ndarray
    sigma: float
    sigma1: float
    radius: float
    dist_xy: float
    dist_field: float
    passed: bool
    margin: float

    def as_dict(self) -> dict:
        return {
            'x': self.x.tolist(),
            'case': self.case,
            'y': self.y.tolist(),
            'eta': self.eta.tolist(),
            'sigma': self.sigma,
            'sigma1': self.sigma1,
            'radius': self.radius,
            'dist_xy': self.dist_xy,
            'dist_field': self.dist_field,
            'pass': self.passed,
            'margin': self.margin,
        }


def estimate_lipschitz(fn: Callable, region: SafeSetRegion, pairs: int,
                       inflation: float = DEFAULT_INFLATION,
                       rng: np.random.Generator = None) -> float:
    """
    Sampled Lipschitz constant of ``fn`` over the region.

    Half of the pairs are independent points of S, half are points paired
    with a small perturbation of themselves. The largest difference quotient
    is a lower bound on the true constant and is multiplied by ``inflation``.

    Raises
    ------
    BoundsError
        If fewer than ``MIN_PAIRS`` pairs are requested or every pair is
        degenerate.
    """
    if pairs < MIN_PAIRS:
        raise BoundsError(f'Need at least {MIN_PAIRS} pairs, got {pairs}')
    rng = np.random.default_rng(DEFAULT_SEED) if rng is None else rng
    n_far = pairs // 2
    n_near = pairs - n_far
    pts = region.sample(2 * n_far + n_near, rng)
    first = list(pts[:n_far])
    second = list(pts[n_far:2 * n_far])
    scale = LOCAL_STEP * float(np.max(region.box[:, 1] - region.box[:, 0]))
    for base in pts[2 * n_far:]:
        first.append(base)
        second.append(base + scale * rng.standard_normal(region.dim))
    best = 0.0
    used = 0
    for x, y in zip(first, second):
        gap = float(np.linalg.norm(x - y))
        if gap == 0:
            continue
        used += 1
        change = np.asarray(fn(x)) - np.asarray(fn(y))
        best = max(best, float(np.linalg.norm(change)) / gap)
    if used == 0:
        raise BoundsError('Degenerate region: every sampled pair coincides')
    logger.debug('estimate_lipschitz: raw %.6g over %d pairs', best, used)
    return inflation * best


def boundary_extrema_gradnorm(barrier: BarrierFunction, samples: int = 1000,
                              region: SafeSetRegion = None,
                              rng: np.random.Generator = None) -> tuple:
    """
    Smallest and largest barrier gradient norm over the boundary.

    Quadratic barriers use ``2 sqrt(c lam_min(Q))`` and
    ``2 sqrt(c lam_max(Q))``. Other barriers are sampled along random rays
    and the extreme samples polished with Nelder-Mead over the ray
    direction.

    Returns
    -------
    (M1, M2): tuple of float
    """
    quad = barrier.quadratic_form
    if quad is not None:
        c, Q = quad
        return 2.0 * np.sqrt(c * Q.min_eig), 2.0 * np.sqrt(c * Q.max_eig)
    if samples < MIN_SAMPLES:
        raise BoundsError(
            f'Need at least {MIN_SAMPLES} boundary samples, got {samples}'
        )
    if region is None:
        raise BoundsError('A sampling region is needed for this barrier')
    rng = np.random.default_rng(DEFAULT_SEED) if rng is None else rng
    center = region.center()
    limit = 2.0 * float(np.linalg.norm(region.box[:, 1] - region.box[:, 0]))
    try:
        pts = region.boundary_sample(samples, rng)
    except ScenarioError as exc:
        raise BoundsError(f'Boundary sampling failed: {exc}') from exc
    norms = np.array([np.linalg.norm(barrier.gradient(p)) for p in pts])

    def along(direction):
        y = boundary_along_ray(barrier, center, direction, max_length=limit)
        if y is None:
            return np.nan
        return float(np.linalg.norm(barrier.gradient(y)))

    def objective(direction, sign):
        value = along(direction)
        return sign * value if np.isfinite(value) else np.inf

    def polish(start, sign):
        result = minimize(objective, start, args=(sign,), method='Nelder-Mead',
                          options={'xatol': 1e-10, 'fatol': 1e-12})
        value = along(result.x)
        return value if np.isfinite(value) else None

    M1 = float(norms.min())
    M2 = float(norms.max())
    low = polish(pts[np.argmin(norms)] - center, 1.0)
    high = polish(pts[np.argmax(norms)] - center, -1.0)
    if low is not None:
        M1 = min(M1, low)
    if high is not None:
        M2 = max(M2, high)
    return M1, M2


def _max_lfh(s: Scenario, region, samples, inflation, rng):
    A = effective_linear_part(s)
    quad = s.barrier.quadratic_form
    if A is not None and quad is not None:
        c, Q = quad
        M = Q.entries @ A + A.T @ Q.entries
        eig = scipy.linalg.eigh(M, Q.entries, eigvals_only=True)
        return float(c * np.max(np.abs(eig))), 'analytic'
    f0 = effective_field(s)
    barrier = s.barrier

    def neg_abs_lfh(x):
        if barrier.value(x) < 0:
            return 0.0
        return -abs(float(barrier.gradient(x) @ f0(x)))

    pts = region.sample(samples, rng)
    values = np.array([-neg_abs_lfh(p) for p in pts])
    best = float(values.max())
    for idx in np.argsort(values)[-POLISH_CANDIDATES:]:
        result = minimize(neg_abs_lfh, pts[idx], method='Nelder-Mead')
        best = max(best, -float(result.fun))
    return inflation * best, sampled(samples, inflation)


def compute_constants(s: Scenario, eps_fraction: float = DEFAULT_EPS_FRACTION,
                      *, samples: int = 10_000, pairs: int = 1000,
                      inflation: float = DEFAULT_INFLATION,
                      seed: int = DEFAULT_SEED) -> ConstantsBundle:
    """
    Estimate every constant of the perturbation bound for a scenario.

    ``eps = eps_fraction * M1``, ``a_star = maxLfh / gamma^-1((M1 - eps) /
    L_gradh)``, ``M3 = M2 + L_gradh gamma(maxLfh / a_star)`` and::

        L1 = lam_max(P) / (lam_min(P) eps^2) L_gradh
             * (1 + M2 lam_max(P) (M2 + M3) / (lam_min(P) M1^2))

    Raises
    ------
    BoundsError
        If ``eps_fraction`` is outside ``(0, 1)`` or the argument of
        ``gamma^-1`` is not positive.
    """
    logger.debug('compute_constants(%s, eps_fraction=%s, samples=%s, '
                 'pairs=%s, inflation=%s, seed=%s)', s.name, eps_fraction,
                 samples, pairs, inflation, seed)
    if not 0 < eps_fraction < 1:
        raise BoundsError(
            f'eps_fraction must lie in (0, 1), got {eps_fraction}'
        )
    rng = np.random.default_rng(seed)
    region = SafeSetRegion.of(s)
    barrier = s.barrier
    provenance = {}

    M1, M2 = boundary_extrema_gradnorm(barrier, samples, region, rng)
    provenance['M1'] = provenance['M2'] = (
        'analytic' if barrier.quadratic_form is not None
        else sampled(samples, 1.0))
    eps = eps_fraction * M1

    quad = barrier.quadratic_form
    if quad is not None:
        L_gradh = 2.0 * quad[1].max_eig
        provenance['L_gradh'] = 'analytic'
    else:
        L_gradh = estimate_lipschitz(barrier.gradient, region, pairs,
                                     inflation, rng)
        provenance['L_gradh'] = sampled(pairs, inflation)

    A = effective_linear_part(s)
    if A is not None:
        L_f = float(np.linalg.norm(A, 2))
        provenance['L_f'] = 'analytic'
    else:
        L_f = estimate_lipschitz(effective_field(s), region, pairs,
                                 inflation, rng)
        provenance['L_f'] = sampled(pairs, inflation)

    maxLfh, provenance['maxLfh'] = _max_lfh(s, region, samples, inflation,
                                            rng)
    if provenance['maxLfh'] != 'analytic':
        logger.warning('Using sampled max |L_f h| = %.6g for %s', maxLfh,
                       s.name)

    if L_gradh <= 0:
        raise BoundsError('Barrier gradient has zero Lipschitz constant')
    r = (M1 - eps) / L_gradh
    if not r > 0:
        raise BoundsError(f'gamma inverse argument must be positive, got {r}')
    gamma = s.gamma
    threshold = gamma.inverse(r)
    a_star = maxLfh / threshold
    if a_star > 0:
        M3 = M2 + L_gradh * gamma(maxLfh / a_star)
    else:
        M3 = M2 + L_gradh * gamma(threshold)
    lo_p, hi_p = s.P.min_eig, s.P.max_eig
    L1 = (hi_p / (lo_p * eps ** 2)) * L_gradh * (
        1.0 + M2 * hi_p * (M2 + M3) / (lo_p * M1 ** 2))
    bundle = ConstantsBundle(
        eps=float(eps), M1=float(M1), M2=float(M2), M3=float(M3),
        L_gradh=float(L_gradh), L_f=float(L_f), maxLfh=float(maxLfh),
        a_star=float(a_star), L1=float(L1), gamma=gamma,
        eps_fraction=float(eps_fraction), provenance=provenance,
    )
    logger.info('Constants for %s: a_star=%.6g, M1=%.6g, M2=%.6g, L1=%.6g',
                s.name, a_star, M1, M2, L1)
    return bundle


def _lfh(s: Scenario, x) -> float:
    return float(s.barrier.gradient(x) @ effective_field(s)(x))


def _radius(bundle: ConstantsBundle, a: float, lfh: float) -> float:
    if not a > 0:
        raise BoundsError(f'Gain a must be positive, got {a}')
    return bundle.gamma(abs(lfh) / a)


def sigma(bundle: ConstantsBundle, a: float, x, s: Scenario) -> float:
    """
    Perturbation radius at ``x``::

        sigma = max(gamma(|L_f h| / a), (L_f + L1 |L_f h|) gamma(|L_f h| / a))
    """
    x = as_vec(x, s.dim)
    lfh = _lfh(s, x)
    g = _radius(bundle, a, lfh)
    return max(g, (bundle.L_f + bundle.L1 * abs(lfh)) * g)


def sigma1(bundle: ConstantsBundle, a: float, x, s: Scenario) -> float:
    """The Lipschitz branch ``(L_f + L1 |L_f h|) gamma(|L_f h| / a)``."""
    x = as_vec(x, s.dim)
    lfh = _lfh(s, x)
    return (bundle.L_f + bundle.L1 * abs(lfh)) * _radius(bundle, a, lfh)


def _require_active(s, a, x):
    lfh = _lfh(s, x)
    h = s.barrier.value(x)
    if h < -BOUNDARY_TOL or lfh + a * h > BOUNDARY_TOL * (1 + abs(lfh)):
        raise BoundsError(
            f'x={x.tolist()} is not in the active region for a={a}'
        )
    return lfh


def _require_gain(bundle, a):
    if a < bundle.a_star:
        raise BoundsError(f'Gain a={a} is below a_star={bundle.a_star}')


def lemma1_check(s: Scenario, bundle: ConstantsBundle, a: float, x) -> float:
    """
    Distance to the boundary against ``gamma(|L_f h| / a)`` on the active set.

    Returns ``gamma(|L_f h(x)| / a) - ||x - y||`` with ``y`` the nearest
    boundary point; nonnegative means the check passed.
    """
    x = as_vec(x, s.dim)
    lfh = _require_active(s, a, x)
    y = proj_boundary_euclidean(x, s.barrier)
    return _radius(bundle, a, lfh) - float(np.linalg.norm(x - y))


def lemma2_check(s: Scenario, bundle: ConstantsBundle, a: float,
                 x) -> tuple:
    """Return ``(||grad h(x)|| - eps, M3 - ||grad h(x)||)``."""
    _require_gain(bundle, a)
    x = as_vec(x, s.dim)
    _require_active(s, a, x)
    norm = float(np.linalg.norm(s.barrier.gradient(x)))
    return norm - bundle.eps, bundle.M3 - norm


def _normalized_direction(s, z):
    grad = s.barrier.gradient(z)
    direction = s.P.solve(grad)
    return direction / float(grad @ direction)


def lemma3_check(s: Scenario, bundle: ConstantsBundle, a: float, x) -> float:
    """
    Lipschitz bound on ``P^-1 grad h / ||grad h||^2_{P^-1}``.

    Returns ``L1 ||x - y|| - ||n(x) - n(y)||`` for the nearest boundary
    point ``y``.
    """
    _require_gain(bundle, a)
    x = as_vec(x, s.dim)
    _require_active(s, a, x)
    y = proj_boundary_euclidean(x, s.barrier)
    gap = float(np.linalg.norm(
        _normalized_direction(s, x) - _normalized_direction(s, y)))
    return bundle.L1 * float(np.linalg.norm(x - y)) - gap


def _slack(value: float) -> float:
    return INCLUSION_ABS_SLACK + INCLUSION_REL_SLACK * value


def check_inclusion(s: Scenario, bundle: ConstantsBundle, a: float,
                    x) -> InclusionReport:
    """
    Check the perturbed inclusion at ``x`` by building its witness.

    Where the filter is inactive the filtered field equals ``f0(x)`` and the
    witness is ``x`` itself. Where it is active the witness is the nearest
    boundary point ``y`` with the normal cone element::

        eta = (L_f h(x) + a h(x)) grad h(y) / ||grad h(y)||^2_{P^-1}

    and the report holds ``||x - y||`` to ``gamma(|L_f h| / a)`` and
    ``||f0(y) - P^-1 eta - f_cbf(x)||`` to ``sigma1(a, x)``. Both are at most
    ``sigma(a, x)``.
    """
    x = as_vec(x, s.dim)
    barrier = s.barrier
    h = barrier.value(x)
    if h < -BOUNDARY_TOL:
        raise BoundsError(f'x={x.tolist()} is outside the safe set')
    f0 = effective_field(s)
    raw = np.asarray(f0(x), dtype=float)
    grad = barrier.gradient(x)
    lfh = float(grad @ raw)
    g = _radius(bundle, a, lfh)
    s1 = (bundle.L_f + bundle.L1 * abs(lfh)) * g
    sig = max(g, s1)
    term = lfh + a * h
    if term > 0:
        return InclusionReport(x, 'inactive', x.copy(), np.zeros(s.dim),
                               sig, s1, g, 0.0, 0.0, True, min(g, s1))
    direction = s.P.solve(grad)
    filtered = raw - term * direction / float(grad @ direction)
    y = proj_boundary_euclidean(x, barrier)
    grad_y = barrier.gradient(y)
    eta = term * grad_y / s.P.inverse_quadratic(grad_y)
    witness_field = np.asarray(f0(y), dtype=float) - s.P.solve(eta)
    dist_xy = float(np.linalg.norm(x - y))
    dist_field = float(np.linalg.norm(witness_field - filtered))
    passed = (dist_xy <= g + _slack(g)
              and dist_field <= s1 + _slack(s1))
    margin = min(g - dist_xy, s1 - dist_field)
    return InclusionReport(x, 'active', y, eta, sig, s1, g, dist_xy,
                           dist_field, bool(passed), float(margin))


def inclusion_grid(s: Scenario, n: int) -> np.ndarray:
    """``n`` points per axis over the bounding box, restricted to S."""
    if n < 1:
        raise BoundsError(f'Grid size must be positive, got {n}')
    box = s.bounding_box
    if n == 1:
        axes = [np.array([row.mean()]) for row in box]
    else:
        axes = [np.linspace(lo, hi, n) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
    pts = mesh.reshape(-1, s.dim)
    return np.array([p for p in pts if s.barrier.value(p) >= 0])


def sweep_inclusion(s: Scenario, bundle: ConstantsBundle, a: float, n: int,
                    workers: int = 1, chunk: int = 64) -> list:
    """
    `check_inclusion` over an ``n``-per-axis grid restricted to S.

    With ``workers > 1`` the grid is split into chunks evaluated by a thread
    pool; the reports come back in grid order regardless.
    """
    logger.debug('sweep_inclusion(%s, a=%s, n=%s, workers=%s)', s.name, a, n,
                 workers)
    pts = inclusion_grid(s, n)

    def run(batch):
        return [check_inclusion(s, bundle, a, p) for p in batch]

    batches = list(partition_all(chunk, pts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(batch) for batch in batches]
    reports = [report for batch in results for report in batch]
    failed = sum(not report.passed for report in reports)
    if failed:
        logger.warning('%d of %d grid points failed the inclusion check',
                       failed, len(reports))
    return reports


def worst_margin(reports) -> Optional[float]:
    """Smallest margin in a sweep, ``None`` for an empty sweep."""
    if not reports:
        return None
    return min(report.margin for report in reports)
