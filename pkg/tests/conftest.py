import numpy as np
import pytest

from boltzlab.phase import MaxwellianParams, PhaseGrid, constant_kernel
from boltzlab.collision import QuadratureScheme


@pytest.fixture(scope="session")
def params():
    return MaxwellianParams(alpha=1.0, beta=1.0, a_m=0.5, a_M=1.0)


@pytest.fixture(scope="session")
def small_grid(params):
    return PhaseGrid.for_params(params, nx=4, nv=8, truncation_tol=1e-8)


@pytest.fixture(scope="session")
def medium_grid(params):
    return PhaseGrid.for_params(params, nx=6, nv=10, truncation_tol=1e-10)


@pytest.fixture(scope="session")
def maxwell_kernel():
    return constant_kernel(gamma=0.0, B_gamma=1.0)


@pytest.fixture(scope="session")
def sphere_quad():
    return QuadratureScheme.product_gauss(4, mc_samples=4000)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
