import logging

import numpy as np
import pytest

from cbfpds.exceptions import DimensionError, ScenarioError, ValidationError
from cbfpds.geometry import SpdMatrix, dist_to_boundary
from cbfpds.problem import (BarrierFunction, DynamicsField, GammaFn,
                            NominalController, SafeSetRegion, Scenario,
                            effective_field, effective_linear_part,
                            fit_gamma_envelope, gamma_for_quadratic,
                            lie_derivative, validate_scenario)
from cbfpds.scenarios import EXAMPLE_C, EXAMPLE_Q

logger = logging.getLogger(__name__)


def test_gamma_linear():
    logger.debug('test_gamma_linear')
    gamma = GammaFn.linear(0.5)
    assert gamma(4.0) == 2.0
    assert gamma.inverse(2.0) == 4.0
    assert gamma(0.0) == 0.0
    with pytest.raises(ValueError):
        gamma(-1.0)
    for slope in (0.0, -1.0, np.inf):
        with pytest.raises(ScenarioError):
            GammaFn.linear(slope)


def test_gamma_table():
    logger.debug('test_gamma_table')
    gamma = GammaFn.tabulated([[1.0, 2.0], [2.0, 3.0]])
    assert gamma(0.5) == pytest.approx(1.0)
    assert gamma(1.5) == pytest.approx(2.5)
    # extrapolates with the last slope
    assert gamma(4.0) == pytest.approx(5.0)
    for r in (0.3, 2.5, 7.0):
        assert gamma(gamma.inverse(r)) == pytest.approx(r)
    assert gamma == GammaFn.tabulated([[0, 0], [1, 2], [2, 3]])
    with pytest.raises(ScenarioError):
        GammaFn.tabulated([[1.0, 2.0], [2.0, 2.0]])
    with pytest.raises(ScenarioError):
        GammaFn.tabulated([[0.0, 0.0]])


def test_barrier_quadratic():
    logger.debug('test_barrier_quadratic')
    barrier = BarrierFunction.quadratic(EXAMPLE_C, EXAMPLE_Q)
    x = np.array([1.0, -0.5])
    assert barrier.value(x) == pytest.approx(9 - (3 - 2 + 0.5))
    assert np.allclose(barrier.gradient(x), [-4.0, -2.0])
    assert np.allclose(barrier.hessian(x), [[-6, -4], [-4, -4]])
    c, Q = barrier.quadratic_form
    assert c == 9.0 and Q == SpdMatrix(EXAMPLE_Q)
    with pytest.raises(ScenarioError):
        BarrierFunction.quadratic(-1.0, EXAMPLE_Q)


def test_barrier_expression_matches_quadratic(example, example_expr):
    logger.debug('test_barrier_expression_matches_quadratic')
    quad, expr = example.barrier, example_expr.barrier
    assert expr.quadratic_form is None
    for x in ([0.0, 0.0], [1.0, -0.5], [-2.0, 3.0]):
        assert expr.value(x) == pytest.approx(quad.value(x))
        assert np.allclose(expr.gradient(x), quad.gradient(x))
        assert np.allclose(expr.hessian(x), quad.hessian(x))


def test_barrier_given_gradient():
    logger.debug('test_barrier_given_gradient')
    barrier = BarrierFunction.expression('r - x1^2 - x2^2', 2,
                                         grad=['-2*x1', '-2*x2'],
                                         params={'r': 4.0})
    assert barrier.value([1.0, 1.0]) == 2.0
    assert np.allclose(barrier.gradient([1.0, 1.0]), [-2.0, -2.0])
    with pytest.raises(DimensionError):
        BarrierFunction.expression('1 - x1^2', 2, grad=['-2*x1'])


def test_vector_fields():
    logger.debug('test_vector_fields')
    f = DynamicsField.affine([[1.0, 0.0], [0.0, 2.0]], [1.0, -1.0])
    assert np.allclose(f([1.0, 1.0]), [2.0, 1.0])
    assert f.linear_part is None
    g = DynamicsField.expression(['x2', '-k*x1'], 2, {'k': 2.0})
    assert np.allclose(g([1.0, 3.0]), [3.0, -2.0])
    u = NominalController.none(3)
    assert np.array_equal(u([1.0, 2.0, 3.0]), np.zeros(3))
    with pytest.raises(ScenarioError):
        DynamicsField('affine', 2, A=np.eye(2))
    with pytest.raises(DimensionError):
        DynamicsField.expression(['x1'], 2)


def test_effective_field(example, still):
    logger.debug('test_effective_field')
    f0 = effective_field(example)
    assert np.allclose(f0([1.0, 0.0]), [-1.0, 1.0])
    assert np.allclose(f0([0.0, 1.0]), [-4.0, 0.0])
    assert np.allclose(effective_linear_part(example), [[-1, -4], [1, 0]])
    assert effective_field(still) is still.dynamics
    x = np.array([0.5, 0.5])
    assert lie_derivative(example.barrier, f0, x) == pytest.approx(
        example.barrier.gradient(x) @ f0(x))


def test_scenario_checks(example):
    logger.debug('test_scenario_checks')
    with pytest.raises(ScenarioError):
        example.with_(a=0.0)
    with pytest.raises(ScenarioError):
        example.with_(a=-1.0)
    with pytest.raises(DimensionError):
        example.with_(P=SpdMatrix.identity(3))
    with pytest.raises(ScenarioError):
        example.with_(bounding_box=[[1, -1], [-1, 1]])
    with pytest.raises(ScenarioError):
        Scenario(name='no box', dim=2,
                 dynamics=DynamicsField.linear(np.zeros((2, 2))),
                 controller=NominalController.none(2),
                 barrier=BarrierFunction.expression('1 - x1^2 - x2^2', 2),
                 P=SpdMatrix.identity(2), a=1.0, gamma=GammaFn.linear(1.0))
    assert example.with_(a=2.0).a == 2.0
    assert example.metric == example.G
    assert example == example.with_()
    assert example != example.with_(a=3.0)


def test_gamma_for_quadratic():
    logger.debug('test_gamma_for_quadratic')
    gamma = gamma_for_quadratic(EXAMPLE_C, EXAMPLE_Q)
    lam_min = (5 - np.sqrt(17)) / 2
    assert gamma.slope == pytest.approx(1 / np.sqrt(9 * lam_min))


@pytest.mark.timeout(120)
def test_gamma_majorant_holds(example, rng):
    logger.debug('test_gamma_majorant_holds')
    region = SafeSetRegion.of(example)
    pts = region.sample(10_000, rng)
    assert len(pts) == 10_000
    for x in pts:
        h = example.barrier.value(x)
        assert dist_to_boundary(x, example.barrier) <= (
            example.gamma(h) + 1e-8)


def test_region_sampling(example, rng):
    logger.debug('test_region_sampling')
    region = SafeSetRegion.of(example)
    pts = region.sample(500, rng)
    assert pts.shape == (500, 2)
    assert all(example.barrier.value(p) >= 0 for p in pts)
    edge = region.boundary_sample(20, rng)
    assert all(abs(example.barrier.value(p)) <= 1e-9 for p in edge)
    assert np.array_equal(region.center(), np.zeros(2))


def test_fit_gamma_envelope(example_expr, rng):
    logger.debug('test_fit_gamma_envelope')
    region = SafeSetRegion.of(example_expr)
    gamma = fit_gamma_envelope(example_expr.barrier, region, 400, rng)
    assert gamma.kind == 'table'
    check = np.random.default_rng(5)
    for x in region.sample(200, check):
        h = example_expr.barrier.value(x)
        assert dist_to_boundary(x, example_expr.barrier) <= gamma(h) + 1e-9


@pytest.mark.timeout(120)
def test_validate_builtins(example, wrong_p, disc, still):
    logger.debug('test_validate_builtins')
    for s in (example, wrong_p, disc, still):
        report = validate_scenario(s, samples=200)
        assert report.ok, report.as_dict()
        report.raise_if_failed()
    names = [check.name for check in validate_scenario(still, 200).checks]
    assert 'origin_equilibrium' not in names
    assert 'strong_monotonicity' not in names


def test_validate_failures(example):
    logger.debug('test_validate_failures')
    shifted = example.with_(
        dynamics=DynamicsField.affine(np.eye(2), [1.0, 0.0]))
    report = validate_scenario(shifted, samples=200)
    assert not report.ok
    assert 'origin_equilibrium' in [c.name for c in report.failures]
    with pytest.raises(ValidationError) as info:
        report.raise_if_failed()
    assert info.value.failures

    tight = example.with_(gamma=GammaFn.linear(1e-3))
    report = validate_scenario(tight, samples=200)
    failed = {c.name: c for c in report.failures}
    assert 'gamma_majorant' in failed
    assert failed['gamma_majorant'].witness is not None

    small_box = example.with_(bounding_box=[[-1.0, 1.0], [-1.0, 1.0]])
    report = validate_scenario(small_box, samples=200)
    assert 'compact' in [c.name for c in report.failures]

    expanding = example.with_(G=SpdMatrix.identity(2),
                              controller=NominalController.none(2))
    report = validate_scenario(expanding, samples=200)
    assert 'strong_monotonicity' in [c.name for c in report.failures]
