import logging

import numpy as np
import pytest

from cbfpds.exceptions import NotOnBoundaryError, OutsideSafeSetError
from cbfpds.geometry import ConeKind, weighted_norm
from cbfpds.pds import (Location, check_pds_monotonicity, di_residual,
                        normal_cone, pds_field, pds_vector_field,
                        project_onto_tangent, tangent_halfspace)
from cbfpds.problem import SafeSetRegion, effective_field

logger = logging.getLogger(__name__)


def test_interior_follows_f0(example, rng):
    logger.debug('test_interior_follows_f0')
    f0 = effective_field(example)
    for x in SafeSetRegion.of(example).sample(50, rng):
        ev = pds_field(example, x)
        assert ev.location is Location.INTERIOR
        assert np.array_equal(ev.output, f0(x))
        assert ev.multiplier == 0.0
        assert di_residual(example, x, ev.output) == 0.0


def test_boundary_projection(wrong_p, rng):
    logger.debug('test_boundary_projection')
    s = wrong_p
    edge = SafeSetRegion.of(s).boundary_sample(100, rng)
    binding = 0
    for x in edge:
        ev = pds_field(s, x)
        assert ev.location is Location.BOUNDARY
        assert tangent_halfspace(s.barrier, x).contains(ev.output)
        assert di_residual(s, x, ev.output) <= 1e-9
        assert ev.multiplier <= 0
        if ev.multiplier < 0:
            binding += 1
            # tangent to the boundary when the constraint binds
            assert s.barrier.gradient(x) @ ev.output == pytest.approx(
                0.0, abs=1e-9)
        # no tangent vector is closer to f0 in the P metric
        for _ in range(20):
            v = ev.output + rng.standard_normal(2)
            if tangent_halfspace(s.barrier, x).contains(v):
                assert weighted_norm(v - ev.raw, s.P) >= weighted_norm(
                    ev.output - ev.raw, s.P) - 1e-12
    assert binding > 0


def test_project_onto_tangent(example):
    logger.debug('test_project_onto_tangent')
    x = np.array([0.0, 0.0])
    v = np.array([3.0, -1.0])
    assert np.array_equal(project_onto_tangent(example, x, v), v)
    y = np.array([np.sqrt(3.0), 0.0])
    outward = -example.barrier.gradient(y)
    projected = project_onto_tangent(example, y, outward)
    assert example.barrier.gradient(y) @ projected == pytest.approx(0.0,
                                                                    abs=1e-9)


def test_cones(example):
    logger.debug('test_cones')
    assert normal_cone(example.barrier, [0.0, 0.0]).kind is ConeKind.ZERO
    y = np.array([np.sqrt(3.0), 0.0])
    cone = normal_cone(example.barrier, y)
    assert cone.kind is ConeKind.RAY
    assert cone.contains(-2.0 * example.barrier.gradient(y))
    assert not cone.contains(example.barrier.gradient(y))
    with pytest.raises(NotOnBoundaryError):
        tangent_halfspace(example.barrier, [0.0, 0.0])
    with pytest.raises(OutsideSafeSetError):
        normal_cone(example.barrier, [3.0, 3.0])
    with pytest.raises(OutsideSafeSetError):
        pds_field(example, [3.0, 3.0])


def test_di_residual(example):
    logger.debug('test_di_residual')
    y = np.array([np.sqrt(3.0), 0.0])
    f0 = effective_field(example)(y)
    d = example.P.solve(example.barrier.gradient(y))
    assert di_residual(example, y, f0 + 2.0 * d) == pytest.approx(0.0,
                                                                  abs=1e-12)
    assert di_residual(example, y, f0 - d) == pytest.approx(
        np.linalg.norm(d))
    x = np.array([0.1, 0.1])
    assert di_residual(example, x, effective_field(example)(x) + [3, 4]) == (
        pytest.approx(5.0))


def test_vector_field_outside(example):
    logger.debug('test_vector_field_outside')
    field = pds_vector_field(example)
    value = field(np.array([3.0, 3.0]))
    assert np.all(np.isfinite(value))


@pytest.mark.parametrize('fixture', ['example', 'wrong_p', 'disc'])
def test_pds_monotonicity(fixture, request):
    logger.debug('test_pds_monotonicity')
    s = request.getfixturevalue(fixture)
    assert check_pds_monotonicity(s, pairs=1000) > 0
