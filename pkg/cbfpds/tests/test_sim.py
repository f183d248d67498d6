import io
import logging

import numpy as np
import pytest

from cbfpds.exceptions import (IntegrationError, OutsideSafeSetError,
                               TrajectoryError)
from cbfpds.sim import (PROJECTED_EULER, SWITCHED_RK4, Trajectory,
                        integrate_cbf, integrate_nominal, integrate_pds,
                        rk4_step, safety_margin, sup_distance, time_grid)

logger = logging.getLogger(__name__)

X0 = (-1.0, 2.0)


def test_time_grid():
    logger.debug('test_time_grid')
    grid = time_grid(0.1, 1.0)
    assert len(grid) == 11
    assert grid[-1] == pytest.approx(1.0)
    assert len(time_grid(0.1, 0.0)) == 1
    for dt, t_final in ((0.0, 1.0), (-0.1, 1.0), (np.nan, 1.0),
                        (0.1, -1.0)):
        with pytest.raises(IntegrationError):
            time_grid(dt, t_final)


def test_rk4_step():
    logger.debug('test_rk4_step')
    x = np.array([1.0, -2.0])
    y = x
    for _ in range(100):
        y = rk4_step(lambda z: -z, y, 0.01)
    assert np.allclose(y, x * np.exp(-1.0), rtol=1e-9)


def test_integrate_cbf(example):
    logger.debug('test_integrate_cbf')
    traj = integrate_cbf(example, X0, 1e-2, 10.0)
    assert len(traj) == 1001
    assert traj.dim == 2
    assert safety_margin(traj) >= -1e-6
    assert traj.active_flags.any()
    assert not traj.active_flags[0]
    assert traj.method.startswith('cbf_rk4')
    assert np.allclose(traj.h_values,
                       [example.barrier.value(x) for x in traj.states])
    again = integrate_cbf(example, X0, 1e-2, 10.0)
    assert np.array_equal(traj.states, again.states)


def test_integrate_rejects_outside(example):
    logger.debug('test_integrate_rejects_outside')
    with pytest.raises(OutsideSafeSetError):
        integrate_cbf(example, [3.0, 3.0], 1e-2, 1.0)
    with pytest.raises(OutsideSafeSetError):
        integrate_pds(example, [3.0, 3.0], 1e-2, 1.0)
    with pytest.raises(IntegrationError):
        integrate_pds(example, X0, 1e-2, 1.0, scheme='leapfrog')


@pytest.mark.timeout(120)
@pytest.mark.parametrize('scheme', [PROJECTED_EULER, SWITCHED_RK4])
def test_integrate_pds_safe(wrong_p, scheme):
    logger.debug('test_integrate_pds_safe')
    traj = integrate_pds(wrong_p, X0, 2e-3, 5.0, scheme=scheme)
    assert safety_margin(traj) >= -1e-6
    assert traj.active_flags.any()
    assert traj.method == f'pds_{scheme}'


@pytest.mark.timeout(300)
@pytest.mark.parametrize('dt', [1e-2, 5e-3])
def test_pds_schemes_agree(example, dt):
    logger.debug('test_pds_schemes_agree')
    euler = integrate_pds(example, X0, dt, 10.0, scheme=PROJECTED_EULER)
    switched = integrate_pds(example, X0, dt, 10.0, scheme=SWITCHED_RK4)
    assert sup_distance(euler, switched) <= 5 * dt
    kinds = {event['kind'] for event in switched.events}
    assert 'enter' in kinds
    assert 'snap' not in kinds
    assert np.all(np.abs(switched.h_values[switched.active_flags]) <= 1e-9)


@pytest.mark.timeout(300)
def test_switched_rk4_converges(example):
    logger.debug('test_switched_rk4_converges')
    coarse = integrate_pds(example, X0, 1e-2, 10.0, scheme=SWITCHED_RK4)
    fine = integrate_pds(example, X0, 1e-3, 10.0, scheme=SWITCHED_RK4)
    reference = integrate_pds(example, X0, 1e-4, 10.0,
                              scheme=PROJECTED_EULER)
    # the reference itself is first order accurate
    assert sup_distance(fine, reference) <= 1e-3
    assert sup_distance(coarse, fine) <= 1e-2


@pytest.mark.timeout(600)
def test_cbf_step_halving(example):
    logger.debug('test_cbf_step_halving')
    full = integrate_cbf(example, X0, 1e-3, 30.0)
    half = integrate_cbf(example, X0, 5e-4, 30.0)
    assert np.linalg.norm(full.final_state - half.final_state) <= 1e-6


def test_integrate_nominal(still, example):
    logger.debug('test_integrate_nominal')
    traj = integrate_nominal(still, [0.3, 0.4], 0.1, 2.0)
    assert np.all(traj.states == [0.3, 0.4])
    assert not traj.active_flags.any()
    # the unfiltered loop does not need to start in S
    traj = integrate_nominal(example, [3.0, 3.0], 0.01, 1.0)
    assert traj.h_values[0] < 0


def test_csv_round_trip(example, tmp_path):
    logger.debug('test_csv_round_trip')
    traj = integrate_cbf(example, X0, 0.05, 2.0)
    path = tmp_path / 'traj.csv'
    traj.to_csv(path)
    text = path.read_text()
    assert text.splitlines()[0] == 't,x1,x2,h,active'
    loaded = Trajectory.from_csv(path)
    assert np.array_equal(loaded.states, traj.states)
    assert np.array_equal(loaded.active_flags, traj.active_flags)
    buffer = io.StringIO()
    loaded.to_csv(buffer)
    assert buffer.getvalue() == text


def test_csv_errors(tmp_path):
    logger.debug('test_csv_errors')
    with pytest.raises(TrajectoryError):
        Trajectory.from_csv(tmp_path / 'missing.csv')
    bad = tmp_path / 'bad.csv'
    bad.write_text('time,a,b\n0,1,2\n')
    with pytest.raises(TrajectoryError):
        Trajectory.from_csv(bad)
    short = tmp_path / 'short.csv'
    short.write_text('t,x1,x2,h,active\n0,1,2,3\n')
    with pytest.raises(TrajectoryError):
        Trajectory.from_csv(short)


def test_trajectory_validation():
    logger.debug('test_trajectory_validation')
    with pytest.raises(TrajectoryError):
        Trajectory([0.0, 0.0], np.zeros((2, 2)), [1.0, 1.0], [False, False])
    with pytest.raises(TrajectoryError):
        Trajectory([0.0, 1.0], np.zeros((3, 2)), [1.0, 1.0], [False, False])
    with pytest.raises(TrajectoryError):
        Trajectory([], np.zeros((0, 2)), [], [])


def test_sup_distance():
    logger.debug('test_sup_distance')
    coarse = Trajectory([0.0, 1.0, 2.0], [[0, 0], [1, 0], [2, 0]],
                        [1, 1, 1], [0, 0, 0])
    fine = Trajectory([0.0, 0.5, 1.0, 1.5], [[0, 1], [0.5, 1], [1, 1],
                                             [1.5, 1]],
                      [1, 1, 1, 1], [0, 0, 0, 0])
    assert sup_distance(coarse, fine) == pytest.approx(1.0)
    assert sup_distance(coarse, coarse) == 0.0
    other = Trajectory([5.0, 6.0], [[0, 0], [0, 0]], [1, 1], [0, 0])
    with pytest.raises(TrajectoryError):
        sup_distance(coarse, other)
    flat = Trajectory([0.0], [[0.0]], [1.0], [False])
    with pytest.raises(TrajectoryError):
        sup_distance(coarse, flat)
