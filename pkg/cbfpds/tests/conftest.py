import numpy as np
import pytest

from cbfpds.geometry import SpdMatrix
from cbfpds.problem import (BarrierFunction, DynamicsField, GammaFn,
                            NominalController, Scenario)
from cbfpds.scenarios import design_example, unit_disc


@pytest.fixture(scope='function')
def example():
    return design_example()


@pytest.fixture(scope='function')
def wrong_p():
    return design_example(wrong_p=True)


@pytest.fixture(scope='function')
def example_expr():
    return design_example(expression=True)


@pytest.fixture(scope='function')
def disc():
    return unit_disc()


@pytest.fixture(scope='function')
def still():
    """Zero dynamics and no controller on the unit disc."""
    return Scenario(
        name='still',
        dim=2,
        dynamics=DynamicsField.linear(np.zeros((2, 2))),
        controller=NominalController.none(2),
        barrier=BarrierFunction.quadratic(1.0, np.eye(2)),
        P=SpdMatrix.identity(2),
        a=1.0,
        gamma=GammaFn.linear(1.0),
    )


@pytest.fixture(scope='function')
def rng():
    return np.random.default_rng(0)
