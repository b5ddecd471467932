import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatprod import fock
from heatprod.errors import InvalidArgumentError, ResourceLimitError
from heatprod.lattice import VectorPotentialSpec, build_box, hamiltonian, sample_disorder
from heatprod.onebody import fermi_symbol
from heatprod.quasifree import bilinear

from conftest import random_hermitian


@pytest.mark.parametrize("n", [1, 3, 5])
def test_car_relations(n):
    a = [x.toarray() for x in fock.car_matrices(n)]
    I = np.eye(2**n)
    for x, y in itertools.product(range(n), repeat=2):
        assert np.max(np.abs(a[x] @ a[y].T + a[y].T @ a[x] - (x == y) * I)) <= 1e-13
        assert np.max(np.abs(a[x] @ a[y] + a[y] @ a[x])) <= 1e-13
    assert all(not np.any(ax @ ax) for ax in a)


@pytest.mark.parametrize("n", [0, 15])
def test_car_guard(n):
    with pytest.raises(ResourceLimitError):
        fock.car_matrices(n)


def test_number_operator_spectrum():
    E = np.linalg.eigvalsh(fock.number_operator(4))
    assert sorted(set(np.rint(E).astype(int))) == [0, 1, 2, 3, 4]
    assert np.allclose(E, np.rint(E))


def test_second_quantize_diagonal():
    diag = np.array([0.3, -1.2, 2.0])
    E = np.sort(np.linalg.eigvalsh(fock.second_quantize(np.diag(diag))))
    subsets = sorted(sum(diag[list(S)]) for k in range(4) for S in itertools.combinations(range(3), k))
    assert np.allclose(E, subsets)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_second_quantize_hermitian_and_number_conserving(seed):
    h = random_hermitian(4, np.random.default_rng(seed))
    H = fock.second_quantize(h)
    N = fock.number_operator(4)
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12
    assert np.max(np.abs(H @ N - N @ H)) <= 1e-12


def test_gibbs_state_basic(chain5):
    _, h = chain5
    H = fock.second_quantize(h)
    g = fock.gibbs_state(H, 1.3)
    assert np.trace(g).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(fock.gibbs_state(H, 1e-12), np.eye(32) / 32, atol=1e-10)
    with pytest.raises(InvalidArgumentError):
        fock.gibbs_state(H, 0.0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), beta=st.floats(0.1, 5), lam=st.floats(0, 2))
def test_gibbs_two_point_is_fermi_symbol(seed, beta, lam):
    box = build_box(1, 2)
    h = hamiltonian(box, sample_disorder(box, seed), lam)
    D = fock.two_point(fock.gibbs_state(fock.second_quantize(h), beta), box.n)
    assert np.max(np.abs(D - fermi_symbol(h, beta))) <= 1e-10


def test_quasifree_density_reproduces_symbol():
    rng = np.random.default_rng(2)
    h = random_hermitian(4, rng)
    D = fermi_symbol(h, 0.8)
    assert np.max(np.abs(fock.two_point(fock.quasifree_density(D), 4) - D)) < 1e-12
    with pytest.raises(InvalidArgumentError):
        fock.quasifree_density(np.diag([1.0, 0.5]))


def test_evolution_zero_field_stationary(chain5):
    box, h = chain5
    H = fock.second_quantize(h)
    g = fock.gibbs_state(H, 1.0)
    V = fock.evolve_many_body(box, H, VectorPotentialSpec(0.0, 2.0, 0.0, 4.0), 0.0, 3.0)
    assert np.max(np.abs(V @ g @ V.conj().T - g)) < 1e-12


def test_evolution_preserves_spectrum_and_entropy(chain5, pulse):
    box, h = chain5
    H = fock.second_quantize(h)
    g = fock.gibbs_state(H, 1.0)
    V = fock.evolve_many_body(box, H, pulse, 0.0, 4.0)
    rho = V @ g @ V.conj().T
    assert np.allclose(np.linalg.eigvalsh(rho), np.linalg.eigvalsh(g), atol=1e-10)
    assert fock.von_neumann_entropy(rho) == pytest.approx(fock.von_neumann_entropy(g), abs=1e-10)


def test_relative_entropy_cases():
    rng = np.random.default_rng(0)
    H = fock.second_quantize(random_hermitian(3, rng))
    g = fock.gibbs_state(H, 1.0)
    assert abs(fock.relative_entropy_fock(g, g)) < 1e-12
    p1, p2 = np.zeros((8, 8)), np.zeros((8, 8))
    p1[0, 0] = p2[1, 1] = 1.0
    assert fock.relative_entropy_fock(p1, p2) == float("inf")
    with pytest.raises(InvalidArgumentError):
        fock.relative_entropy_fock(p1, np.eye(4) / 4)


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_fock_first_law(chain5, pulse, beta):
    box, h = chain5
    H = fock.second_quantize(h)
    g = fock.gibbs_state(H, beta)
    V = fock.evolve_many_body(box, H, pulse, 0.0, 4.0)
    rho = V @ g @ V.conj().T
    dE = np.trace((rho - g) @ H).real
    Q = fock.relative_entropy_fock(rho, g) / beta
    assert abs(Q - dE) <= 1e-9 * (1 + abs(dE))


def test_multicommutator_basic():
    rng = np.random.default_rng(1)
    B = [random_hermitian(4, rng) for _ in range(3)]
    assert np.allclose(fock.multicommutator(B[:2]), B[0] @ B[1] - B[1] @ B[0])
    inner = B[1] @ B[2] - B[2] @ B[1]
    assert np.allclose(fock.multicommutator(B), B[0] @ inner - inner @ B[0])
    assert not np.any(np.abs(fock.multicommutator([np.eye(4), B[0], B[1]])) > 1e-14)
    with pytest.raises(InvalidArgumentError):
        fock.multicommutator([B[0], np.eye(3)])
    with pytest.raises(InvalidArgumentError):
        fock.multicommutator([B[0]])


def test_monomial_operator_matches_car():
    n = 3
    a = fock.car_matrices(n)
    e = np.eye(n)
    op = fock.monomial_operator(bilinear(e[0], e[2]), n)
    assert np.allclose(op, (a[0].T @ a[2]).toarray())


def test_partial_trace_keeps_trace_and_two_point():
    rng = np.random.default_rng(4)
    h = random_hermitian(4, rng)
    rho = fock.gibbs_state(fock.second_quantize(h), 1.0)
    r = fock.partial_trace_keep(rho, 4, [1, 2])
    assert np.trace(r).real == pytest.approx(1.0)
    D = fock.two_point(rho, 4)
    assert np.allclose(fock.two_point(r, 2), D[1:3, 1:3], atol=1e-12)
