import logging

import numpy as np
import pytest

from cbfpds.exceptions import TrajectoryError
from cbfpds.plot import plot_trajectories
from cbfpds.sim import Trajectory, integrate_cbf, integrate_pds

logger = logging.getLogger(__name__)


def test_plot_svg(wrong_p, tmp_path):
    logger.debug('test_plot_svg')
    trajectories = [integrate_cbf(wrong_p, (-1.0, 2.0), 0.05, 5.0),
                    integrate_pds(wrong_p, (-1.0, 2.0), 0.05, 5.0)]
    first, second = tmp_path / 'first.svg', tmp_path / 'second.svg'
    for path in (first, second):
        plot_trajectories(trajectories, path, barrier=wrong_p.barrier,
                          box=wrong_p.bounding_box, labels=['cbf', 'pds'])
    text = first.read_text()
    assert text.lstrip().startswith('<?xml')
    assert '<svg' in text
    assert first.read_bytes() == second.read_bytes()


def test_plot_limits_and_empty(tmp_path):
    logger.debug('test_plot_limits_and_empty')
    path = tmp_path / 'empty.svg'
    plot_trajectories([], path, xlim=(-1, 1), ylim=(-2, 2))
    assert path.stat().st_size > 0


def test_plot_rejects_non_planar(tmp_path):
    logger.debug('test_plot_rejects_non_planar')
    line = Trajectory([0.0, 1.0], np.zeros((2, 3)), [1.0, 1.0],
                      [False, False])
    with pytest.raises(TrajectoryError):
        plot_trajectories([line], tmp_path / 'bad.svg')
