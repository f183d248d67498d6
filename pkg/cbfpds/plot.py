"""
SVG rendering of planar trajectories over the safe set boundary.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Optional

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .exceptions import TrajectoryError
from .sim import Trajectory

logger = logging.getLogger(__name__)

# Grid resolution per axis for the boundary contour
CONTOUR_POINTS = 301
# Fixed salt so SVG element ids are identical between runs
SVG_HASHSALT = 'cbfpds'


def _limits(trajectories, box, xlim, ylim):
    if xlim is not None and ylim is not None:
        return tuple(xlim), tuple(ylim)
    points = [traj.states for traj in trajectories]
    if box is not None:
        points.append(np.asarray(box, dtype=float).T)
    if not points:
        return (xlim or (-1.0, 1.0)), (ylim or (-1.0, 1.0))
    stacked = np.vstack(points)
    lo, hi = stacked.min(axis=0), stacked.max(axis=0)
    pad = 0.05 * np.maximum(hi - lo, 1e-9)
    auto_x = (float(lo[0] - pad[0]), float(hi[0] + pad[0]))
    auto_y = (float(lo[1] - pad[1]), float(hi[1] + pad[1]))
    return tuple(xlim or auto_x), tuple(ylim or auto_y)


def plot_trajectories(trajectories: Sequence[Trajectory], out,
                      barrier=None, box=None,
                      labels: Optional[Sequence[str]] = None,
                      xlim=None, ylim=None) -> None:
    """
    Write a standalone SVG of planar trajectories.

    The boundary ``{h = 0}`` is drawn as the zero contour of ``barrier`` on a
    grid over the axis ranges. Each trajectory is a polyline with a circle at
    its start and a cross at its end. Identical input gives byte-identical
    output.

    Raises
    ------
    TrajectoryError
        If a trajectory is not two-dimensional.
    """
    for traj in trajectories:
        if traj.dim != 2:
            raise TrajectoryError(
                f'Only planar trajectories can be plotted, got dim {traj.dim}'
            )
    if barrier is not None and barrier.dim != 2:
        raise TrajectoryError(
            f'Only planar barriers can be plotted, got dim {barrier.dim}'
        )
    xlim, ylim = _limits(trajectories, box, xlim, ylim)
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    if barrier is not None:
        xs = np.linspace(*xlim, CONTOUR_POINTS)
        ys = np.linspace(*ylim, CONTOUR_POINTS)
        grid = np.array([[barrier.value((x, y)) for x in xs] for y in ys])
        ax.contour(xs, ys, grid, levels=[0.0], colors='k', linewidths=1.5)
    labels = list(labels) if labels is not None else [
        f'trajectory {i + 1}' for i in range(len(trajectories))]
    for traj, label in zip(trajectories, labels):
        line, = ax.plot(traj.states[:, 0], traj.states[:, 1], label=label)
        color = line.get_color()
        ax.plot(*traj.states[0], marker='o', color=color)
        ax.plot(*traj.states[-1], marker='x', color=color)
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    ax.set_xlabel('x1')
    ax.set_ylabel('x2')
    ax.set_aspect('equal', adjustable='box')
    if trajectories:
        ax.legend(loc='best')
    with matplotlib.rc_context({'svg.hashsalt': SVG_HASHSALT}):
        fig.savefig(out, format='svg', metadata={'Date': None})
    logger.info('Wrote plot of %d trajectories', len(trajectories))
