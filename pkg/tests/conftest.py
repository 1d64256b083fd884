import numpy as np
import pytest

from ncentre.model import CentreConfig


@pytest.fixture(scope="session")
def single_centre():
    return CentreConfig(dimension=3, centres=((0.0, 0.0, 0.0),), strengths=(1.0,))


@pytest.fixture(scope="session")
def two_centre():
    return CentreConfig(
        dimension=3,
        centres=((-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
        strengths=(1.0, 1.0),
    )


@pytest.fixture(scope="session")
def triangle():
    """Non-collinear attracting 3-centre configuration in the plane."""
    return CentreConfig(
        dimension=2,
        centres=((0.0, 0.0), (2.0, 0.0), (1.0, 1.7)),
        strengths=(1.0, 1.0, 1.0),
    )


@pytest.fixture(scope="session")
def mixed_3d():
    """Non-collinear 3-centre configuration in R^3 with mixed signs."""
    return CentreConfig(
        dimension=3,
        centres=((-1.0, 0.0, 0.2), (1.0, 0.1, 0.0), (0.0, 1.3, -0.1)),
        strengths=(1.0, 1.5, -0.4),
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
