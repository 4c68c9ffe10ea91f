import numpy as np
import pytest

from rateloss import PolynomialSource, UniformSymmetric, params_from_distortion


@pytest.fixture(scope="session")
def quad_source():
    """Quadratic benchmark setup used across the suite."""
    return PolynomialSource(k=3, beta=np.array([2.0, 3.0, 1.0]), sigma2=16.0,
                            y_dist=UniformSymmetric(1.0))


@pytest.fixture(scope="session")
def half_channel(quad_source):
    """Channel achieving distortion 8 on the benchmark source."""
    return params_from_distortion(quad_source.sigma2, 8.0)
