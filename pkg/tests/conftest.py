import numpy as np
import pytest

from heatprod.lattice import VectorPotentialSpec, build_box, hamiltonian, sample_disorder


@pytest.fixture
def chain5():
    box = build_box(1, 2)
    return box, hamiltonian(box, sample_disorder(box, 3), 0.5)


@pytest.fixture
def pulse():
    return VectorPotentialSpec(0.2, 2.0, 0.0, 4.0)


def random_unitary(n, rng):
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_hermitian(n, rng, scale=1.0):
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (Z + Z.conj().T)
