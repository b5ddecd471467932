import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatprod.errors import InvalidArgumentError
from heatprod.lattice import (VectorPotentialSpec, build_box, electric_field, field_coupling,
                              field_energy_derivative, field_energy_operator, hamiltonian, laplacian,
                              peierls_laplacian, sample_disorder)


@pytest.mark.parametrize("d,L,n", [(1, 1, 3), (2, 1, 9), (1, 2.5, 5), (3, 1, 27), (2, 0.5, 1)])
def test_box_site_count(d, L, n):
    assert build_box(d, L).n == n


def test_box_order_is_lexicographic():
    box = build_box(2, 1)
    assert [tuple(x) for x in box.sites] == sorted(tuple(x) for x in box.sites)
    assert box.sites[0].tolist() == [-1, -1]
    for i in range(box.n):
        assert box.index(box.site(i)) == i


@pytest.mark.parametrize("d,L", [(0, 1), (1, 0), (1, -2), (1.5, 1)])
def test_box_rejects_bad_input(d, L):
    with pytest.raises(InvalidArgumentError):
        build_box(d, L)


def test_disorder_range_and_determinism():
    box = build_box(1, 50)
    a, b = sample_disorder(box, 7), sample_disorder(box, 7)
    assert np.array_equal(a.values, b.values)
    assert np.all(np.abs(a.values) <= 1)
    assert not np.array_equal(a.values, sample_disorder(box, 8).values)


def test_disorder_mean():
    v = sample_disorder(build_box(1, 50_000), 1).values
    assert v.size > 10**5
    assert abs(v.mean()) < 0.01


@pytest.mark.parametrize("d", [1, 2])
def test_disorder_nested_boxes_agree(d):
    small, big = build_box(d, 3), build_box(d, 6)
    ws, wb = sample_disorder(small, 11), sample_disorder(big, 11)
    assert np.array_equal(wb.values[big.embedding(small)], ws.values)


def test_laplacian_small_chain():
    assert np.array_equal(laplacian(build_box(1, 1)), [[2, -1, 0], [-1, 2, -1], [0, -1, 2]])


@pytest.mark.parametrize("d,L", [(1, 8), (2, 3), (3, 1)])
def test_laplacian_spectrum(d, L):
    M = laplacian(build_box(d, L))
    assert np.array_equal(M, M.T) and np.isrealobj(M)
    E = np.linalg.eigvalsh(M)
    assert E.min() >= -1e-12 and E.max() <= 4 * d + 1e-12
    assert np.all(np.diag(M) == 2 * d)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), lam=st.floats(0, 5), d=st.sampled_from([1, 2]))
def test_hamiltonian_spectrum_and_diagonal(seed, lam, d):
    box = build_box(d, 3)
    w = sample_disorder(box, seed)
    h = hamiltonian(box, w, lam)
    E = np.linalg.eigvalsh(h)
    assert E.min() >= -lam - 1e-10 and E.max() <= 4 * d + lam + 1e-10
    assert np.allclose(np.diag(h), 2 * d + lam * w.values)


def test_hamiltonian_zero_coupling_and_negative_lambda():
    box = build_box(1, 4)
    w = sample_disorder(box, 0)
    assert np.array_equal(hamiltonian(box, w, 0.0), laplacian(box))
    with pytest.raises(InvalidArgumentError):
        hamiltonian(box, w, -0.1)


def test_peierls_zero_field_is_laplacian():
    box = build_box(2, 3)
    A = VectorPotentialSpec(0.0, 2.0, 0.0, 1.0, (1.0, 0.0))
    assert np.array_equal(peierls_laplacian(box, A, 0.5), laplacian(box))


@pytest.mark.parametrize("d,direction", [(1, (1.0,)), (2, (0.6, 0.8))])
@pytest.mark.parametrize("t", [0.3, 0.5, 0.77])
def test_peierls_unimodular_hermitian(d, direction, t):
    box = build_box(d, 4)
    A = VectorPotentialSpec(1.3, 3.0, 0.0, 1.0, direction)
    M = peierls_laplacian(box, A, t)
    lap = laplacian(box)
    assert np.max(np.abs(M - M.conj().T)) <= 1e-12
    assert np.allclose(np.abs(M), np.abs(lap), atol=1e-12)
    assert np.array_equal(np.diag(M), np.diag(lap))


def test_peierls_phase_matches_direct_line_integral():
    box = build_box(1, 5)
    A = VectorPotentialSpec(0.7, 3.0, 0.0, 2.0)
    t = 0.8
    M = peierls_laplacian(box, A, t)
    i, j = box.index((1,)), box.index((2,))
    # y = x_j, x = x_i: hop from j to i picks up exp(-i int A . (y - x))
    a = np.linspace(0, 1, 20001)
    vals = [A.potential(t, np.array([1.0 + s]))[0] for s in a]
    integral = np.trapezoid(vals, a)
    assert M[i, j] == pytest.approx(-np.exp(-1j * integral), abs=1e-8)


@pytest.mark.parametrize("t", [-1.0, 0.0, 4.0, 7.0])
def test_field_energy_vanishes_outside_pulse(t):
    box = build_box(1, 6)
    A = VectorPotentialSpec(0.5, 2.0, 0.0, 4.0)
    assert not np.any(field_energy_operator(box, A, t))
    assert not np.any(field_energy_derivative(box, A, t))


@pytest.mark.parametrize("l", [1.0, 2.5, 4.0])
def test_field_energy_spatial_support(l):
    box = build_box(2, 7)
    A = VectorPotentialSpec(0.5, l, 0.0, 1.0, (1.0, 0.0))
    w = field_energy_operator(box, A, 0.5)
    far = np.max(np.abs(box.sites), axis=1) > l + 1
    assert not np.any(w[far]) and not np.any(w[:, far])
    assert np.any(w)


def test_field_energy_derivative_matches_finite_difference():
    box = build_box(1, 5)
    A = VectorPotentialSpec(0.4, 3.0, 0.0, 2.0)
    t, h = 0.7, 1e-5
    fd = (field_energy_operator(box, A, t + h) - field_energy_operator(box, A, t - h)) / (2 * h)
    assert np.max(np.abs(fd - field_energy_derivative(box, A, t))) < 1e-8


def test_electric_field():
    A = VectorPotentialSpec(0.5, 2.0, 0.0, 1.0, (0.6, 0.8))
    x = np.array([0.3, -0.2])
    assert not np.any(electric_field(A, -0.5, x))
    t = 0.4

    def fd_error(h):
        fd = -(A.potential(t + h, x) - A.potential(t - h, x)) / (2 * h)
        return np.max(np.abs(fd - electric_field(A, t, x)))

    assert fd_error(5e-3) < fd_error(1e-2) / 3.5  # second order
    assert np.allclose(electric_field(A.with_eta(1.0), t, x), 2 * electric_field(A, t, x))


@pytest.mark.parametrize("kwargs", [dict(t0=1.0, t1=1.0), dict(l=0.0), dict(direction=(1.0, 1.0)),
                                    dict(time_profile="nope"), dict(quadrature_nodes=0)])
def test_potential_spec_validation(kwargs):
    base = dict(eta=0.1, l=1.0, t0=0.0, t1=1.0)
    base.update(kwargs)
    with pytest.raises(InvalidArgumentError):
        VectorPotentialSpec(**base)


def test_coupling_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        field_coupling(build_box(2, 2), VectorPotentialSpec(0.1, 1.0))


def test_cos2_profile_supported():
    box = build_box(1, 4)
    A = VectorPotentialSpec(0.3, 2.0, 0.0, 1.0, time_profile="cos2", space_profile="cos2")
    w = field_energy_operator(box, A, 0.5)
    assert np.any(w) and np.max(np.abs(w - w.conj().T)) < 1e-14
