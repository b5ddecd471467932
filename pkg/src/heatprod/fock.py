"""
Brute-force many-body oracle on small boxes.

Fock space of ``n`` modes is realized by the Jordan-Wigner construction on
``(C^2)^{\\otimes n}``; mode ``x`` is tensor factor ``x`` (the first factor
is the most significant bit) and the basis state ``|1>`` is occupied.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, ResourceLimitError
from .lattice import LatticeBox, VectorPotentialSpec, check_hermitian, field_coupling
from .onebody import default_step, uniform_grid

MAX_SITES = 14
SUPPORT_TOL = 1e-12


def _guard(n: int, allow_large: bool = False) -> None:
    if n < 1 or (n > MAX_SITES and not allow_large):
        raise ResourceLimitError(f"Fock oracle limited to 1..{MAX_SITES} sites, got {n}")


@lru_cache(maxsize=8)
def _car(n: int) -> tuple:
    lower = sp.csr_array(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |0><1|
    Z = sp.csr_array(np.diag([1.0, -1.0]))
    I2 = sp.identity(2, format="csr")
    ops = []
    for x in range(n):
        a = sp.identity(1, format="csr")
        for y in range(n):
            a = sp.kron(a, Z if y < x else (lower if y == x else I2), format="csr")
        ops.append(sp.csr_array(a))
    return tuple(ops)


def car_matrices(n: int, allow_large: bool = False) -> list:
    """Annihilation operators ``a_1 ... a_n`` as sparse ``2^n x 2^n`` matrices.

    Parameters
    ----------
    n : int
        Number of modes, ``1 <= n <= 14`` unless ``allow_large``.
    allow_large : bool
        Override the size guard.
    """
    _guard(n, allow_large)
    return list(_car(n))


@lru_cache(maxsize=8)
def _bilinears(n: int) -> dict:
    a = _car(n)
    return {(x, y): (a[x].T @ a[y]).tocsr() for x in range(n) for y in range(n)}


def second_quantize(h: np.ndarray, allow_large: bool = False) -> np.ndarray:
    """Dense Fock matrix of ``sum_{x,y} h_xy a_x^* a_y``."""
    h = np.asarray(h)
    n = h.shape[0]
    _guard(n, allow_large)
    bl = _bilinears(n)
    H = sp.csr_array((2**n, 2**n), dtype=complex)
    for (x, y), op in bl.items():
        if h[x, y] != 0:
            H = H + h[x, y] * op
    return H.toarray()


def number_operator(n: int) -> np.ndarray:
    return second_quantize(np.eye(n))


def _eig_function(H: np.ndarray, fn) -> np.ndarray:
    E, V = np.linalg.eigh(H)
    return (V * fn(E)) @ V.conj().T


def gibbs_state(H: np.ndarray, beta: float) -> np.ndarray:
    """Gibbs density matrix ``exp(-beta H) / Tr exp(-beta H)``."""
    if not beta > 0:
        raise InvalidArgumentError("inverse temperature must be positive")
    check_hermitian(H, "H")
    E, V = np.linalg.eigh(H)
    w = np.exp(-beta * (E - E.min()))
    w /= w.sum()
    rho = (V * w) @ V.conj().T
    return 0.5 * (rho + rho.conj().T)


def quasifree_density(D: np.ndarray) -> np.ndarray:
    """Fock density matrix of the gauge-invariant quasi-free state with symbol ``D``.

    Requires the spectrum of ``D`` to lie strictly inside ``(0, 1)``.
    """
    E, V = np.linalg.eigh(0.5 * (D + D.conj().T))
    if np.any(E <= 0) or np.any(E >= 1):
        raise InvalidArgumentError("symbol spectrum must lie strictly inside (0, 1)")
    K = (V * np.log((1.0 - E) / E)) @ V.conj().T
    return gibbs_state(second_quantize(K), 1.0)


def two_point(rho: np.ndarray, n: int) -> np.ndarray:
    """Symbol of a Fock state: ``D[y, x] = Tr(rho a_x^* a_y)``."""
    bl = _bilinears(n)
    D = np.zeros((n, n), dtype=complex)
    for (x, y), op in bl.items():
        D[y, x] = np.trace(op @ rho)
    return D


def evolve_many_body(box: LatticeBox, H: np.ndarray, A: VectorPotentialSpec, s: float, t: float,
                     step: float | None = None) -> np.ndarray:
    """Many-body propagator of ``H + W_t`` by the exponential midpoint rule.

    ``W_t`` is the second quantization of the field energy operator. The
    step policy is the one used for the one-particle propagator.

    Parameters
    ----------
    box : LatticeBox
    H : ndarray
        Second-quantized static Hamiltonian.
    A : VectorPotentialSpec
    s, t : float
        Initial and final time.
    step : float, optional
        Maximal step, default ``(t1 - t0) / 400``.
    """
    return evolve_many_body_path(box, H, A, uniform_grid(s, t, default_step(A) if step is None else step))[-1]


def evolve_many_body_path(box: LatticeBox, H: np.ndarray, A: VectorPotentialSpec,
                          grid: np.ndarray) -> list:
    """Many-body propagators ``V_{t_k, t_0}`` at every point of ``grid``."""
    check_hermitian(H, "H")
    cpl = field_coupling(box, A)
    V = np.eye(H.shape[0], dtype=complex)
    out = [V]
    free: dict = {}
    for a, b in zip(grid[:-1], grid[1:]):
        dt = b - a
        tm = 0.5 * (a + b)
        if cpl.coef.size == 0 or not (A.t0 < tm < A.t1):
            key = round(dt, 15)
            if key not in free:
                free[key] = _eig_function(H, lambda E: np.exp(-1j * dt * E))
            E = free[key]
        else:
            G = H + second_quantize(cpl.w(tm))
            E = _eig_function(G, lambda ev: np.exp(-1j * dt * ev))
        V = E @ V
        out.append(V)
    return out


def relative_entropy_fock(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Relative entropy ``Tr rho1 (ln rho1 - ln rho2)``; ``+inf`` if supports are incompatible.

    Eigenvalues at or below ``1e-12`` are treated as zero; ``0 ln 0 = 0``.
    """
    if rho1.shape != rho2.shape:
        raise InvalidArgumentError("dimension mismatch")
    rho1 = 0.5 * (rho1 + rho1.conj().T)
    p1 = np.linalg.eigvalsh(rho1)
    p2, V2 = np.linalg.eigh(0.5 * (rho2 + rho2.conj().T))
    # weight of rho1 along each eigenvector of rho2
    weight = np.real(np.einsum("ij,ik,kj->j", V2.conj(), rho1, V2))
    kernel = p2 <= SUPPORT_TOL
    if np.any(kernel) and np.sum(np.abs(weight[kernel])) > SUPPORT_TOL:
        return float("inf")
    # no truncation below the threshold: x ln x -> 0 handles round-off sized
    # eigenvalues consistently in both terms
    pos1 = p1 > 0
    ent = np.sum(p1[pos1] * np.log(p1[pos1]))
    pos2 = p2 > 0
    cross = np.sum(weight[pos2] * np.log(p2[pos2]))
    return float(ent - cross)


def von_neumann_entropy(rho: np.ndarray) -> float:
    p = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    p = p[p > SUPPORT_TOL]
    return float(-np.sum(p * np.log(p)))


def multicommutator(ops: Sequence[np.ndarray]) -> np.ndarray:
    """Right-nested commutator ``[B_1, [B_2, [..., [B_{N-1}, B_N]]]]``."""
    if len(ops) < 2:
        raise InvalidArgumentError("need at least two operators")
    shape = np.shape(ops[0])
    if any(np.shape(o) != shape for o in ops):
        raise InvalidArgumentError("dimension mismatch among operators")
    acc = np.asarray(ops[-1])
    for B in reversed(ops[:-1]):
        B = np.asarray(B)
        acc = B @ acc - acc @ B
    return acc


def factor_operator(factor, n: int) -> np.ndarray:
    """Fock matrix of ``a^*(f)`` or ``a(g)`` for a :class:`~heatprod.quasifree.Factor`."""
    a = _car(n)
    psi = np.asarray(factor.psi)
    if factor.creation:
        op = sum(psi[x] * a[x].T for x in range(n) if psi[x] != 0)
    else:
        op = sum(np.conj(psi[x]) * a[x] for x in range(n) if psi[x] != 0)
    if isinstance(op, int):
        return np.zeros((2**n, 2**n), dtype=complex)
    return op.toarray().astype(complex)


def monomial_operator(monomial, n: int) -> np.ndarray:
    """Fock matrix of an ordered product of factors."""
    out = np.eye(2**n, dtype=complex)
    for f in monomial:
        out = out @ factor_operator(f, n)
    return out


def partial_trace_keep(rho: np.ndarray, n: int, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on the modes ``keep`` (tensor-factor partial trace).

    For parity-even states and a contiguous block of modes this is the
    fermionic restriction of the state.
    """
    keep = sorted(keep)
    drop = [x for x in range(n) if x not in keep]
    T = rho.reshape([2] * (2 * n))
    # trace out dropped modes one at a time, highest first so axes stay valid
    m = n
    for x in sorted(drop, reverse=True):
        T = np.trace(T, axis1=x, axis2=x + m)
        m -= 1
    k = len(keep)
    return T.reshape(2**k, 2**k)
