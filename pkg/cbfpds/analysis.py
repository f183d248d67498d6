"""
Studies built on the filters and integrators.

Equilibrium search and classification, sampled monotonicity moduli,
incremental stability (contraction) tests, gain sweeps comparing the CBF
closed loop with the projected system, and the two-dimensional design example
with a correct and a wrong projection metric.
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cbf import cbf_vector_field
from .config import DEFAULT_SEED
from .exceptions import CbfPdsError
from .geometry import SpdMatrix, as_vec, weighted_inner, weighted_norm
from .problem import CheckResult, SafeSetRegion, Scenario
from .sim import (PROJECTED_EULER, integrate_cbf, integrate_pds,
                  safety_margin, sup_distance)

logger = logging.getLogger(__name__)

# Real parts within this band of zero classify as marginal
STABILITY_BAND = 1e-4
# Finite difference step, scaled by 1 + ||x||
FD_STEP = 1e-6
# Newton iterates are accepted as equilibria below this residual
NEWTON_TOL = 1e-9
# Reported equilibria never exceed this residual
EQUILIBRIUM_TOL = 1e-6
# Newton iteration cap per seed
MAX_NEWTON_ITER = 50
# Equilibria closer than this are merged
MERGE_RADIUS = 1e-4
# Tolerance on h for keeping a Newton limit as a point of S
CONTAINS_TOL = 1e-7
# |h| below this flags an equilibrium as lying on the boundary
BOUNDARY_FLAG_TOL = 1e-6
# |L_f h + a h| below this puts a point on the filter's activation surface
KINK_TOL = 1e-6
# Default decay rate and slack of the contraction test
CONTRACTION_RATE = 0.15
CONTRACTION_TOL = 1e-4
# Design example: initial state and the equilibrium the wrong metric creates
EXAMPLE_X0 = (-1.0, 2.0)
WRONG_P_EQUILIBRIUM = (-2.985, 2.777)
WRONG_P_RADIUS = 1e-2
ORIGIN_RADIUS = 1e-3
SAFETY_FLOOR = -1e-6
ROBUSTNESS_GAINS = (0.1, 1.0, 10.0)


class Stability(enum.Enum):
    STABLE = 'stable'
    UNSTABLE = 'unstable'
    MARGINAL = 'marginal'


@dataclass(frozen=True)
class Equilibrium:
    """
    A rest point of a vector field.

    ``one_sided`` marks points on the filter's activation surface, where the
    field is only piecewise smooth and the classification combines
    one-sided Jacobians.
    """
    point: np.ndarray
    residual: float
    stability: Stability
    boundary: bool
    one_sided: bool = False

    def as_dict(self) -> dict:
        return {
            'point': self.point.tolist(),
            'residual': self.residual,
            'stability': self.stability.value,
            'boundary': self.boundary,
            'one_sided': self.one_sided,
        }


def classify_jacobian(J) -> Stability:
    """Classify by the largest real part of the eigenvalues of ``J``."""
    top = float(np.max(np.linalg.eigvals(np.asarray(J, dtype=float)).real))
    if top < -STABILITY_BAND:
        return Stability.STABLE
    if top > STABILITY_BAND:
        return Stability.UNSTABLE
    return Stability.MARGINAL


def fd_jacobian(fn: Callable, x, side: int = 0) -> np.ndarray:
    """
    Finite difference Jacobian with step ``FD_STEP * (1 + ||x||)``.

    ``side`` 0 is central, +1 forward and -1 backward.
    """
    x = np.asarray(x, dtype=float)
    step = FD_STEP * (1.0 + float(np.linalg.norm(x)))
    n = x.shape[0]
    J = np.zeros((n, n))
    base = None if side == 0 else np.asarray(fn(x), dtype=float)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        if side == 0:
            J[:, i] = (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (
                2 * step)
        elif side > 0:
            J[:, i] = (np.asarray(fn(x + e)) - base) / step
        else:
            J[:, i] = (base - np.asarray(fn(x - e))) / step
    return J


def _newton(fn: Callable, x0: np.ndarray):
    x = np.array(x0, dtype=float)
    fx = np.asarray(fn(x), dtype=float)
    res = float(np.linalg.norm(fx))
    for _ in range(MAX_NEWTON_ITER):
        if res <= NEWTON_TOL * 1e-3:
            break
        J = fd_jacobian(fn, x)
        step = np.linalg.lstsq(J, -fx, rcond=None)[0]
        alpha = 1.0
        while alpha > 1e-8:
            trial = x + alpha * step
            f_trial = np.asarray(fn(trial), dtype=float)
            r_trial = float(np.linalg.norm(f_trial))
            if r_trial < res:
                x, fx, res = trial, f_trial, r_trial
                break
            alpha *= 0.5
        else:
            break
    return x, res


def _classify_point(fn, x, kink) -> tuple:
    if kink is not None and abs(kink(x)) <= KINK_TOL:
        sides = [classify_jacobian(fd_jacobian(fn, x, side))
                 for side in (1, -1)]
        if Stability.UNSTABLE in sides:
            return Stability.UNSTABLE, True
        if all(side is Stability.STABLE for side in sides):
            return Stability.STABLE, True
        return Stability.MARGINAL, True
    return classify_jacobian(fd_jacobian(fn, x)), False


def find_equilibria(fn: Callable, region: SafeSetRegion, seeds: int = 32,
                    rng: np.random.Generator = None,
                    kink: Callable = None, workers: int = 1) -> list:
    """
    Multi-start damped Newton search for rest points inside the region.

    Seeds are the origin, ``seeds`` quasi-random points of S and a quarter as
    many boundary points. Limits outside S or with residual above
    ``NEWTON_TOL`` are dropped and duplicates within ``MERGE_RADIUS`` merged.

    Parameters
    ----------
    fn: callable
        Vector field, continuous on a neighborhood of S.
    region: `SafeSetRegion`
    seeds: ``int``
    rng: ``numpy.random.Generator``, optional
    kink: callable, optional
        Scalar function vanishing where ``fn`` switches between smooth
        pieces; equilibria there get one-sided classification.
    workers: ``int``, optional
        Threads used for the Newton runs.

    Returns
    -------
    equilibria: list of `Equilibrium`
        Sorted by distance from the origin.
    """
    logger.debug('find_equilibria(seeds=%s, workers=%s)', seeds, workers)
    rng = np.random.default_rng(DEFAULT_SEED) if rng is None else rng
    starts = [np.zeros(region.dim)]
    starts.extend(region.sample(seeds, rng))
    starts.extend(region.boundary_sample(max(seeds // 4, 4), rng))

    def run(x0):
        try:
            return _newton(fn, x0)
        except CbfPdsError:
            logger.debug('Newton failed from %s', x0, exc_info=True)
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            limits = list(pool.map(run, starts))
    else:
        limits = [run(x0) for x0 in starts]
    candidates = sorted(
        (item for item in limits
         if item is not None and item[1] <= NEWTON_TOL
         and region.contains(item[0], CONTAINS_TOL)),
        key=lambda item: item[1])
    kept = []
    for x, _ in candidates:
        if all(np.linalg.norm(x - other) > MERGE_RADIUS for other in kept):
            kept.append(x)
    equilibria = []
    for x in sorted(kept, key=lambda p: float(np.linalg.norm(p))):
        residual = float(np.linalg.norm(fn(x)))
        if residual > EQUILIBRIUM_TOL:
            continue
        stability, one_sided = _classify_point(fn, x, kink)
        boundary = abs(region.barrier.value(x)) <= BOUNDARY_FLAG_TOL
        equilibria.append(Equilibrium(x, residual, stability, boundary,
                                      one_sided))
    logger.info('Found %d equilibria from %d seeds', len(equilibria),
                len(starts))
    return equilibria


def check_strong_monotonicity(fn: Callable, G: SpdMatrix, pairs: int,
                              region: SafeSetRegion,
                              rng: np.random.Generator = None,
                              return_witness: bool = False):
    """
    Sampled modulus of strong ``G``-monotonicity of ``-fn``.

    Returns the smallest ratio
    ``<x - y | -(fn(x) - fn(y))>_G / ||x - y||^2_G`` over ``pairs`` sampled
    pairs of S. A positive value is empirical evidence of strong
    monotonicity with at least that modulus.

    Raises
    ------
    ValueError
        If fewer than 1000 pairs are requested.
    """
    if pairs < 1000:
        raise ValueError(f'Need at least 1000 pairs, got {pairs}')
    rng = np.random.default_rng(DEFAULT_SEED) if rng is None else rng
    pts = region.sample(2 * pairs, rng)
    worst, witness = np.inf, None
    for x, y in zip(pts[0::2], pts[1::2]):
        diff = x - y
        denom = weighted_norm(diff, G) ** 2
        if denom == 0:
            continue
        change = np.asarray(fn(x)) - np.asarray(fn(y))
        ratio = weighted_inner(diff, -change, G) / denom
        if ratio < worst:
            worst, witness = ratio, (x, y)
    logger.debug('check_strong_monotonicity: alpha_est=%.6g', worst)
    if return_witness:
        return float(worst), witness
    return float(worst)


@dataclass
class ContractionReport:
    """Distances between two trajectories in the scenario metric."""
    times: np.ndarray
    distances: np.ndarray
    rate: float
    tol: float
    passed: bool
    worst_excess: float

    def as_dict(self) -> dict:
        return {
            'rate': self.rate,
            'tol': self.tol,
            'pass': self.passed,
            'worst_excess': self.worst_excess,
            'initial_distance': float(self.distances[0]),
            'final_distance': float(self.distances[-1]),
        }


def _run(s, controller, x0, dt, t_final, a, scheme):
    if controller == 'cbf':
        return integrate_cbf(s, x0, dt, t_final, a=a)
    if controller == 'pds':
        return integrate_pds(s, x0, dt, t_final, scheme=scheme)
    raise ValueError(f'Unknown controller {controller!r}')


def contraction_test(s: Scenario, controller: str, x0a, x0b, dt: float,
                     t_final: float, *, a: float = None,
                     rate: float = CONTRACTION_RATE,
                     tol: float = CONTRACTION_TOL,
                     scheme: str = PROJECTED_EULER) -> ContractionReport:
    """
    Test incremental exponential stability along one pair of trajectories.

    Passes if ``||e(t)||_G <= ||e(0)||_G exp(-rate t) + tol`` at every
    sample, with ``G`` the scenario's contraction metric (``P`` if none).
    ``controller`` is ``'cbf'`` or ``'pds'``.
    """
    logger.debug('contraction_test(%s, %s, %s, %s, a=%s)', s.name,
                 controller, x0a, x0b, a)
    first = _run(s, controller, x0a, dt, t_final, a, scheme)
    second = _run(s, controller, x0b, dt, t_final, a, scheme)
    metric = s.metric
    distances = np.array([weighted_norm(p - q, metric)
                          for p, q in zip(first.states, second.states)])
    envelope = distances[0] * np.exp(-rate * first.times) + tol
    excess = distances - envelope
    worst = float(excess.max())
    return ContractionReport(first.times, distances, rate, tol,
                             bool(worst <= 0), worst)


def convergence_sweep(s: Scenario, x0, a_list, dt: float, t_final: float,
                      scheme: str = PROJECTED_EULER,
                      workers: int = 1) -> list:
    """
    Sup distance between CBF trajectories and the projected trajectory.

    Returns ``(a, distance)`` rows in the order of ``a_list``, which must be
    strictly increasing.
    """
    a_list = [float(a) for a in a_list]
    if not a_list or np.any(np.diff(a_list) <= 0):
        raise ValueError(f'Gains must be strictly increasing, got {a_list}')
    logger.debug('convergence_sweep(%s, x0=%s, a_list=%s)', s.name, x0,
                 a_list)
    reference = integrate_pds(s, x0, dt, t_final, scheme=scheme)

    def distance(a):
        return sup_distance(integrate_cbf(s, x0, dt, t_final, a=a),
                            reference)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            distances = list(pool.map(distance, a_list))
    else:
        distances = [distance(a) for a in a_list]
    return list(zip(a_list, distances))


def estimate_a_stable(s: Scenario, x0a, x0b, a_low: float, a_high: float,
                      dt: float, t_final: float, *,
                      rate: float = CONTRACTION_RATE,
                      tol: float = CONTRACTION_TOL,
                      iterations: int = 12) -> Optional[float]:
    """
    Empirical smallest gain for which the CBF closed loop contracts.

    Geometric bisection on ``[a_low, a_high]`` over the outcome of
    `contraction_test`. Returns ``None`` if even ``a_high`` fails. The
    result is an empirical figure for one pair of initial states.
    """
    def passes(a):
        return contraction_test(s, 'cbf', x0a, x0b, dt, t_final, a=a,
                                rate=rate, tol=tol).passed

    if not passes(a_high):
        return None
    if passes(a_low):
        return float(a_low)
    lo, hi = a_low, a_high
    for _ in range(iterations):
        mid = float(np.sqrt(lo * hi))
        if passes(mid):
            hi = mid
        else:
            lo = mid
    logger.info('Empirical contracting gain for %s: %.4g', s.name, hi)
    return float(hi)


def a_robustness(s: Scenario, a_list=ROBUSTNESS_GAINS, x0=EXAMPLE_X0,
                 dt: float = 1e-3, t_final: float = 30.0, target=None,
                 radius: float = ORIGIN_RADIUS) -> list:
    """
    Run the CBF closed loop for several gains and check where it ends.

    Each row holds the gain, the distance of the final state from
    ``target`` (the origin by default), the safety margin and whether both
    are acceptable.
    """
    target = np.zeros(s.dim) if target is None else as_vec(target, s.dim)
    rows = []
    for a in a_list:
        traj = integrate_cbf(s, x0, dt, t_final, a=a)
        gap = float(np.linalg.norm(traj.final_state - target))
        margin = safety_margin(traj)
        rows.append({'a': float(a), 'final_distance': gap,
                     'safety_margin': margin,
                     'ok': gap <= radius and margin >= SAFETY_FLOOR})
    return rows


@dataclass
class ReproduceReport:
    variant: str
    final_state: np.ndarray
    safety_margin: float
    equilibria: list
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(check.ok for check in self.checks)

    def as_dict(self) -> dict:
        return {
            'variant': self.variant,
            'ok': self.ok,
            'final_state': self.final_state.tolist(),
            'safety_margin': self.safety_margin,
            'equilibria': [eq.as_dict() for eq in self.equilibria],
            'checks': [{'name': c.name, 'ok': c.ok, 'detail': c.detail}
                       for c in self.checks],
        }


VARIANTS = {
    'correct': 'builtin:paper-example',
    'correctp': 'builtin:paper-example',
    'wrong': 'builtin:paper-example-wrongP',
    'wrongp': 'builtin:paper-example-wrongP',
}


def cbf_equilibria(s: Scenario, a: float = None, seeds: int = 32,
                   seed: int = DEFAULT_SEED, workers: int = 1) -> list:
    """`find_equilibria` on the CBF closed loop with its activation surface."""
    flt = cbf_vector_field(s, a)

    def kink(x):
        ev = flt.evaluate(x, strict=False)
        return ev.lfh + flt.a * ev.h

    return find_equilibria(flt, SafeSetRegion.of(s), seeds,
                           np.random.default_rng(seed), kink=kink,
                           workers=workers)


def reproduce_example(variant: str, x0=EXAMPLE_X0, dt: float = 1e-3,
                      t_final: float = 30.0, seeds: int = 32,
                      seed: int = DEFAULT_SEED) -> ReproduceReport:
    """
    Re-run the two-dimensional design example.

    ``'correct'`` uses the contraction metric as projection metric: the
    closed loop must reach the origin for ``a`` in 0.1, 1 and 10 and the
    origin must be its only equilibrium. ``'wrong'`` uses ``diag(3, 1)``:
    the closed loop must settle at a stable equilibrium near
    ``(-2.985, 2.777)`` on the boundary. Both must stay in S.
    """
    from .scenarios import load_scenario

    key = variant.lower().replace('-', '').replace('_', '')
    if key not in VARIANTS:
        raise ValueError(f'Unknown variant {variant!r}')
    wrong = key.startswith('wrong')
    s = load_scenario(VARIANTS[key])
    logger.debug('reproduce_example(%s)', variant)
    traj = integrate_cbf(s, x0, dt, t_final)
    margin = safety_margin(traj)
    final = traj.final_state
    equilibria = cbf_equilibria(s, seeds=seeds, seed=seed)
    report = ReproduceReport('wrong' if wrong else 'correct', final, margin,
                             equilibria)

    def check(name, ok, detail):
        report.checks.append(CheckResult(name, bool(ok), detail))
        if not ok:
            logger.warning('Reproduction check %s failed: %s', name, detail)

    check('safe', margin >= SAFETY_FLOOR, f'min h = {margin:.3g}')
    if wrong:
        target = np.array(WRONG_P_EQUILIBRIUM)
        gap = float(np.linalg.norm(final - target))
        check('converges_to_undesired', gap <= WRONG_P_RADIUS,
              f'|x(T) - {WRONG_P_EQUILIBRIUM}| = {gap:.3g}')
        near = [eq for eq in equilibria
                if np.linalg.norm(eq.point - target) <= WRONG_P_RADIUS]
        check('undesired_equilibrium_stable',
              any(eq.stability is Stability.STABLE for eq in near),
              f'{len(near)} equilibria near {WRONG_P_EQUILIBRIUM}: '
              f'{[eq.stability.value for eq in near]}')
    else:
        gap = float(np.linalg.norm(final))
        check('converges_to_origin', gap <= ORIGIN_RADIUS,
              f'|x(T)| = {gap:.3g}')
        only_origin = (len(equilibria) == 1
                       and np.linalg.norm(equilibria[0].point)
                       <= EQUILIBRIUM_TOL)
        check('single_equilibrium', only_origin,
              f'equilibria at {[eq.point.tolist() for eq in equilibria]}')
        check('origin_stable',
              only_origin and equilibria[0].stability is Stability.STABLE,
              f'{[eq.stability.value for eq in equilibria]}')
        rows = a_robustness(s, ROBUSTNESS_GAINS, x0, dt, t_final)
        check('a_robustness', all(row['ok'] for row in rows),
              ', '.join(f"a={row['a']:g}: {row['final_distance']:.3g}"
                        for row in rows))
    return report
