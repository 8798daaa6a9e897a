import numpy as np
import pytest

from pfasst_sh.cases import default_params, initial_state
from pfasst_sh.spherical_harmonics import n_coeffs, spectral_index
from pfasst_sh.swe_rhs import SWEProblem


def random_coeffs(R, rng, scale=1.0):
    """Coefficients of a random real band-limited field."""
    K = n_coeffs(R)
    c = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    c[spectral_index(R).r == 0] = c[spectral_index(R).r == 0].real
    return scale * c


def random_state(R, rng):
    """A random state with physically sized entries."""
    x = np.stack([random_coeffs(R, rng, 1e3), random_coeffs(R, rng, 1e-6),
                  random_coeffs(R, rng, 1e-7)])
    x[1:, 0] = 0.0  # vorticity and divergence have zero global mean
    x[0, 0] += 9.80616 * 29400 * np.sqrt(2.0)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def dome15():
    params, cfg = default_params("gaussian")
    problem = SWEProblem(15, params)
    u0 = initial_state("gaussian", problem.plan, params, cfg).as_array()
    return problem, u0
