import numpy as np
import pytest


def random_hermitian(rng, dim, scale=1.0):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_density(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = a @ a.conj().T
    return m / np.trace(m).real


def random_psd(rng, dim, scale=1.0):
    """Random Hermitian shifted so its minimum eigenvalue is exactly zero."""
    m = random_hermitian(rng, dim, scale)
    return m - np.linalg.eigvalsh(m)[0] * np.eye(dim)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
