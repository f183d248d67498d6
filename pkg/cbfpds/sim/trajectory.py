"""
Sampled trajectories and their CSV form.
"""
from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..exceptions import TrajectoryError

logger = logging.getLogger(__name__)

PathOrFile = Union[str, os.PathLike, io.IOBase]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    States sampled on a strictly increasing time grid.

    Attributes
    ----------
    times: array, shape (N,)
    states: array, shape (N, n)
    h_values: array, shape (N,)
        Barrier value at every state.
    active_flags: array of bool, shape (N,)
        Whether the safety constraint was active at the state.
    method: str
        Name of the scheme that produced the trajectory.
    dt: float
        Nominal step size.
    events: list of dict
        Boundary snaps and similar numerical interventions.
    """
    times: np.ndarray
    states: np.ndarray
    h_values: np.ndarray
    active_flags: np.ndarray
    method: str = ''
    dt: float = 0.0
    events: list = field(default_factory=list)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        h_values = np.asarray(self.h_values, dtype=float)
        active = np.asarray(self.active_flags, dtype=bool)
        if states.ndim != 2 or times.ndim != 1:
            raise TrajectoryError(
                f'Bad trajectory shapes: times {times.shape}, '
                f'states {states.shape}'
            )
        if not (len(times) == len(states) == len(h_values) == len(active)):
            raise TrajectoryError(
                f'Length mismatch: {len(times)} times, {len(states)} states, '
                f'{len(h_values)} barrier values, {len(active)} flags'
            )
        if len(times) == 0:
            raise TrajectoryError('Trajectory is empty')
        if np.any(np.diff(times) <= 0):
            raise TrajectoryError('Trajectory times must strictly increase')
        for name, value in (('times', times), ('states', states),
                            ('h_values', h_values),
                            ('active_flags', active)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    def __len__(self):
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, target: PathOrFile):
        """
        Write ``t,x1,...,xn,h,active`` rows with 17 significant digits.

        The output is byte-identical for identical trajectories.
        """
        header = ','.join(['t'] + [f'x{i + 1}' for i in range(self.dim)]
                          + ['h', 'active'])
        table = np.column_stack([self.times, self.states, self.h_values,
                                 self.active_flags.astype(int)])
        fmt = ['%.17g'] * (self.dim + 2) + ['%d']
        np.savetxt(target, table, fmt=fmt, delimiter=',', header=header,
                   comments='')
        logger.debug('Wrote %d trajectory rows', len(self))

    @classmethod
    def from_csv(cls, source: PathOrFile) -> Trajectory:
        """
        Read a trajectory written by `to_csv`.

        Raises
        ------
        TrajectoryError
            If the file is unreadable or not in the trajectory layout.
        """
        try:
            if isinstance(source, (str, os.PathLike)):
                with open(source, 'r') as fd:
                    header = fd.readline().strip()
                    rows = np.loadtxt(fd, delimiter=',', ndmin=2)
            else:
                header = source.readline().strip()
                rows = np.loadtxt(source, delimiter=',', ndmin=2)
        except (OSError, ValueError) as exc:
            raise TrajectoryError(
                f'Could not read trajectory from {source}: {exc}'
            ) from exc
        columns = header.split(',')
        n = len(columns) - 3
        expected = ['t'] + [f'x{i + 1}' for i in range(n)] + ['h', 'active']
        if n < 1 or columns != expected:
            raise TrajectoryError(f'Unexpected trajectory header {header!r}')
        if rows.size == 0:
            raise TrajectoryError(f'Trajectory file {source} has no rows')
        if rows.shape[1] != len(columns):
            raise TrajectoryError(
                f'Rows have {rows.shape[1]} columns, header has '
                f'{len(columns)}'
            )
        times = rows[:, 0]
        dt = float(np.median(np.diff(times))) if len(times) > 1 else 0.0
        return cls(times, rows[:, 1:n + 1], rows[:, n + 1],
                   rows[:, n + 2] != 0, method='csv', dt=dt)


def sup_distance(t1: Trajectory, t2: Trajectory) -> float:
    """
    Largest distance between two trajectories over their common time range.

    Both are linearly interpolated onto the finer of the two grids within
    the common range.

    Raises
    ------
    TrajectoryError
        If the time ranges do not overlap or the dimensions differ.
    """
    if t1.dim != t2.dim:
        raise TrajectoryError(
            f'Cannot compare trajectories of dimension {t1.dim} and {t2.dim}'
        )
    start = max(t1.times[0], t2.times[0])
    stop = min(t1.times[-1], t2.times[-1])
    if start > stop:
        raise TrajectoryError(
            f'Time ranges [{t1.times[0]}, {t1.times[-1]}] and '
            f'[{t2.times[0]}, {t2.times[-1]}] do not overlap'
        )

    def window(traj):
        inside = (traj.times >= start) & (traj.times <= stop)
        return traj.times[inside]

    grid1, grid2 = window(t1), window(t2)
    grid = grid1 if len(grid1) >= len(grid2) else grid2
    if len(grid) == 0:
        grid = np.array([start])

    def sample(traj):
        return np.column_stack([np.interp(grid, traj.times, traj.states[:, i])
                                for i in range(traj.dim)])

    gaps = np.linalg.norm(sample(t1) - sample(t2), axis=1)
    return float(gaps.max())


def safety_margin(traj: Trajectory) -> float:
    """Smallest barrier value along the trajectory."""
    return float(np.min(traj.h_values))
