"""
Trajectory generation for the filtered closed loop and the projected system.

- ``integrate_cbf`` runs the CBF-filtered field with fixed step RK4.
- ``integrate_pds`` runs the projected system, by projected Euler steps or
  by RK4 with boundary snapping.
- ``integrate_nominal`` runs the unfiltered closed loop.
"""
from .integrators import (PDS_SCHEMES, PROJECTED_EULER, SWITCHED_RK4,
                          integrate_cbf, integrate_nominal, integrate_pds,
                          rk4_step, time_grid)
from .trajectory import Trajectory, safety_margin, sup_distance

__all__ = [
    "PDS_SCHEMES",
    "PROJECTED_EULER",
    "SWITCHED_RK4",
    "Trajectory",
    "integrate_cbf",
    "integrate_nominal",
    "integrate_pds",
    "rk4_step",
    "safety_margin",
    "sup_distance",
    "time_grid",
]
