"""
Fixed-step integrators for the filtered and the projected dynamics.

All schemes use a fixed step so identical inputs give identical trajectories.
CBF states that numerically leave S are first retried with smaller steps and
then projected back onto the boundary in the ``P`` metric. Snaps, and the
boundary entries and releases of the switched PDS scheme, are recorded in
`Trajectory.events`.
"""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from ..cbf import cbf_vector_field
from ..config import (BOUNDARY_TOL, ESCAPE_TOL, MAX_STEP_HALVINGS)
from ..exceptions import (GradientVanishesError, IntegrationError,
                          OutsideSafeSetError, ProjectionError)
from ..geometry import as_vec, proj_boundary_weighted, proj_set_weighted
from ..pds import pds_vector_field
from ..problem import Scenario, effective_field
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

PROJECTED_EULER = 'projected_euler'
SWITCHED_RK4 = 'switched_rk4'
PDS_SCHEMES = (PROJECTED_EULER, SWITCHED_RK4)


def rk4_step(fn: Callable, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth order Runge-Kutta step."""
    k1 = fn(x)
    k2 = fn(x + 0.5 * dt * k1)
    k3 = fn(x + 0.5 * dt * k2)
    k4 = fn(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def time_grid(dt: float, t_final: float) -> np.ndarray:
    """
    ``0, dt, 2 dt, ...`` up to ``t_final`` rounded to a whole number of steps.

    Raises
    ------
    IntegrationError
        If ``dt <= 0`` or ``t_final < 0``.
    """
    if not (np.isfinite(dt) and dt > 0):
        raise IntegrationError(f'Step size must be positive, got {dt}')
    if not (np.isfinite(t_final) and t_final >= 0):
        raise IntegrationError(
            f'Final time must be nonnegative, got {t_final}'
        )
    steps = int(round(t_final / dt))
    return dt * np.arange(steps + 1)


def _start(s: Scenario, x0, strict: bool = True) -> np.ndarray:
    x0 = as_vec(x0, s.dim)
    h0 = s.barrier.value(x0)
    if strict and h0 < -BOUNDARY_TOL:
        raise OutsideSafeSetError(
            f'Initial state {x0.tolist()} is outside the safe set, '
            f'h={h0:.6g}'
        )
    return x0


def _snap(s: Scenario, y: np.ndarray, t: float, events: list) -> np.ndarray:
    h_before = s.barrier.value(y)
    try:
        snapped = proj_set_weighted(y, s.P, s.barrier)
    except (ProjectionError, GradientVanishesError) as exc:
        raise IntegrationError(
            f'Could not snap state {y.tolist()} back to the boundary at '
            f't={t}'
        ) from exc
    h_after = s.barrier.value(snapped)
    if h_after < -ESCAPE_TOL:
        raise IntegrationError(
            f'State escaped the safe set at t={t}: h={h_after:.6g}'
        )
    events.append({'t': float(t), 'kind': 'snap', 'h': float(h_before)})
    logger.debug('Snapped state at t=%s from h=%.3g', t, h_before)
    return snapped


def _guarded_step(s: Scenario, fn: Callable, x: np.ndarray, dt: float,
                  t: float, events: list) -> np.ndarray:
    """RK4 step with step halving and boundary snapping."""
    barrier = s.barrier
    y = rk4_step(fn, x, dt)
    if barrier.value(y) >= -BOUNDARY_TOL:
        return y
    for k in range(1, MAX_STEP_HALVINGS + 1):
        count = 2 ** k
        sub = dt / count
        y = x
        inside = True
        for _ in range(count):
            y = rk4_step(fn, y, sub)
            if barrier.value(y) < -BOUNDARY_TOL and k < MAX_STEP_HALVINGS:
                inside = False
                break
        if inside and barrier.value(y) >= -BOUNDARY_TOL:
            return y
    return _snap(s, y, t + dt, events)


def _finish(s, times, states, flags, method, dt, events) -> Trajectory:
    states = np.array(states)
    h_values = np.array([s.barrier.value(x) for x in states])
    snaps = sum(event['kind'] == 'snap' for event in events)
    if snaps:
        logger.warning('%s run on %s snapped to the boundary %d times',
                       method, s.name, snaps)
    traj = Trajectory(times, states, h_values, flags, method=method, dt=dt,
                      events=events)
    logger.info('Integrated %s on %s: %d steps, min h=%.3g', method, s.name,
                len(times) - 1, float(h_values.min()))
    return traj


def integrate_cbf(s: Scenario, x0, dt: float, t_final: float,
                  a: float = None) -> Trajectory:
    """
    Integrate the CBF-filtered closed loop with fixed step RK4.

    A step landing below ``-BOUNDARY_TOL`` is retried with up to
    ``MAX_STEP_HALVINGS`` halvings of the step; if that does not help the
    state is projected onto the boundary and the event recorded.

    Parameters
    ----------
    s: `Scenario`
    x0: array-like
        Initial state in S.
    dt: ``float``
    t_final: ``float``
    a: ``float``, optional
        Filter gain, ``s.a`` by default.

    Raises
    ------
    OutsideSafeSetError
        If ``x0`` is not in S.
    IntegrationError
        On bad step parameters or an unrecoverable escape from S.
    """
    logger.debug('integrate_cbf(%s, x0=%s, dt=%s, t_final=%s, a=%s)',
                 s.name, x0, dt, t_final, a)
    x = _start(s, x0)
    times = time_grid(dt, t_final)
    field = cbf_vector_field(s, a)
    events = []
    states = [x]
    flags = [field.evaluate(x, strict=False).active]
    for t in times[:-1]:
        x = _guarded_step(s, field, x, dt, t, events)
        states.append(x)
        flags.append(field.evaluate(x, strict=False).active)
    method = f'cbf_rk4(a={field.a:g})'
    return _finish(s, times, states, flags, method, dt, events)


def _pull_back(s: Scenario, y: np.ndarray, t: float,
               project: Callable) -> np.ndarray:
    try:
        return project(y, s.P, s.barrier)
    except (ProjectionError, GradientVanishesError) as exc:
        raise IntegrationError(f'Projection failed at t={t}') from exc


def _sliding_field(s: Scenario, f0: Callable) -> Callable:
    """``f0`` with its ``P^-1 grad h`` component removed."""
    def fn(x):
        v = np.asarray(f0(x), dtype=float)
        grad = s.barrier.gradient(x)
        direction = s.P.solve(grad)
        return v - (float(grad @ v) / float(grad @ direction)) * direction
    return fn


def _pushes_out(s: Scenario, f0: Callable, x: np.ndarray) -> bool:
    if s.barrier.value(x) > BOUNDARY_TOL:
        return False
    return float(s.barrier.gradient(x) @ np.asarray(f0(x), dtype=float)) < 0


def _switched_rk4(s: Scenario, f0: Callable, x: np.ndarray,
                  times: np.ndarray, dt: float, events: list):
    """
    RK4 that switches between ``f0`` and the sliding field on the boundary.

    Free steps that cross the boundary are projected back in the ``P``
    metric and start sliding. Sliding steps are pulled back onto the
    boundary and release once ``f0`` points into S again.
    """
    def free(z):
        return np.asarray(f0(z), dtype=float)

    sliding_fn = _sliding_field(s, f0)
    sliding = _pushes_out(s, f0, x)
    states, flags = [x], [sliding]
    for t in times[:-1]:
        if sliding:
            x = _pull_back(s, rk4_step(sliding_fn, x, dt), t + dt,
                           proj_boundary_weighted)
            sliding = _pushes_out(s, f0, x)
            if not sliding:
                events.append({'t': float(t + dt), 'kind': 'release',
                               'h': float(s.barrier.value(x))})
        else:
            y = rk4_step(free, x, dt)
            h = s.barrier.value(y)
            if h < -BOUNDARY_TOL:
                x = _pull_back(s, y, t + dt, proj_set_weighted)
                sliding = _pushes_out(s, f0, x)
                events.append({'t': float(t + dt), 'kind': 'enter',
                               'h': float(h)})
            else:
                x = y
        states.append(x)
        flags.append(sliding)
    return states, flags


def integrate_pds(s: Scenario, x0, dt: float, t_final: float,
                  scheme: str = PROJECTED_EULER) -> Trajectory:
    """
    Integrate the projected dynamical system.

    ``'projected_euler'`` takes an explicit Euler step on ``f0`` and projects
    the result back onto S in the ``P`` metric. ``'switched_rk4'`` runs RK4
    on ``f0`` in the interior and on the sliding field, ``f0`` with its
    normal component removed in the ``P`` metric, while the constraint
    binds. ``active_flags`` mark states where the constraint binds.

    Raises
    ------
    OutsideSafeSetError
        If ``x0`` is not in S.
    IntegrationError
        On an unknown scheme, bad step parameters or a failed projection.
    """
    logger.debug('integrate_pds(%s, x0=%s, dt=%s, t_final=%s, scheme=%s)',
                 s.name, x0, dt, t_final, scheme)
    if scheme not in PDS_SCHEMES:
        raise IntegrationError(
            f'Unknown scheme {scheme!r}, expected one of {PDS_SCHEMES}'
        )
    x = _start(s, x0)
    times = time_grid(dt, t_final)
    f0 = effective_field(s)
    events = []
    if scheme == SWITCHED_RK4:
        states, flags = _switched_rk4(s, f0, x, times, dt, events)
        return _finish(s, times, states, flags, f'pds_{scheme}', dt, events)
    field = pds_vector_field(s)

    def binding(state):
        return field.evaluate(state, strict=False).multiplier < 0

    states = [x]
    flags = [binding(x)]
    for t in times[:-1]:
        x = _pull_back(s, x + dt * np.asarray(f0(x)), t + dt,
                       proj_set_weighted)
        states.append(x)
        flags.append(binding(x))
    return _finish(s, times, states, flags, f'pds_{scheme}', dt, events)


def integrate_nominal(s: Scenario, x0, dt: float,
                      t_final: float) -> Trajectory:
    """
    Integrate the unfiltered closed loop ``f0`` with RK4.

    Nothing keeps this trajectory in S; ``active_flags`` are all False.
    """
    logger.debug('integrate_nominal(%s, x0=%s, dt=%s, t_final=%s)', s.name,
                 x0, dt, t_final)
    x = _start(s, x0, strict=False)
    times = time_grid(dt, t_final)
    f0 = effective_field(s)

    def fn(state):
        return np.asarray(f0(state), dtype=float)

    states = [x]
    for _ in times[:-1]:
        x = rk4_step(fn, x, dt)
        if not np.all(np.isfinite(x)):
            raise IntegrationError('Nominal trajectory diverged')
        states.append(x)
    flags = np.zeros(len(times), dtype=bool)
    return _finish(s, times, states, flags, 'nominal_rk4', dt, [])
