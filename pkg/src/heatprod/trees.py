"""
Tree expansions of multi-commutators of monomials in creation/annihilation
operators, tree-decay envelopes, and the heat-production series.

Numbering
---------
A multi-commutator of ``N`` monomials is written ``[B_1, [B_2, ..., [B_{N-1}, B_N]]]``
(outermost first, as in :func:`heatprod.fock.multicommutator`). Tree vertices use
the nesting numbering ``p_j = B_{N+1-j}``: vertex 1 is the innermost entry and
vertex ``N`` the outermost one. The recursive tree family is

    T_2 = {{1, 2}},   T_N = { {{k, N}} + T : k = 1..N-1, T in T_{N-1} },

so that adding the outermost entry attaches a new leaf.

Expansion rule
--------------
For even monomials ``B = B_1 ... B_{2n}`` and ``C = C_1 ... C_{2m}`` of linear
elements whose anticommutators are scalars,

    [B, C] = sum_{i, j} (-1)^(j+1) B_1..B_{i-1} C_1..C_{j-1} {B_i, C_j} C_{j+1}..C_{2m} B_{i+1}..B_{2n}.

Applying it with ``B = p_{N+1}`` and ``C`` the reduced monomial of each term of
the ``N``-fold expansion gives the ``N+1``-fold expansion, one tree term per
(tree, contraction map) with all contracted slots distinct.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, ResourceLimitError
from .lattice import LatticeBox, VectorPotentialSpec, field_coupling
from .quasifree import Factor, bilinear, wick_expectation

MAX_ENTRIES = 6
MAX_HALF_LENGTH = 2


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tree:
    """Tree on vertices ``1..N`` given by its bonds ``(i, j)`` with ``i < j``."""

    N: int
    bonds: tuple

    def is_tree(self) -> bool:
        if len(self.bonds) != self.N - 1:
            return False
        parent = list(range(self.N + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.bonds:
            ri, rj = find(i), find(j)
            if ri == rj:
                return False
            parent[ri] = rj
        return True

    def degree(self, v: int) -> int:
        return sum(v in b for b in self.bonds)


@lru_cache(maxsize=None)
def _trees(N: int) -> tuple:
    if N == 2:
        return (Tree(2, ((1, 2),)),)
    out = []
    for k in range(1, N):
        for T in _trees(N - 1):
            out.append(Tree(N, ((k, N),) + T.bonds))
    return tuple(out)


def enumerate_trees(N: int) -> list:
    """The recursive tree family on ``N`` vertices, ``(N-1)!`` trees in a fixed order."""
    if int(N) != N or N < 2:
        raise InvalidArgumentError(f"need N >= 2, got {N}")
    return list(_trees(int(N)))


# ---------------------------------------------------------------------------
# Expansion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Slot:
    """Factor position: vertex ``v`` (nesting numbering) and index inside its monomial."""

    v: int
    k: int


@dataclass
class TreeTerm:
    """One term ``m * prod({x(b), y(b)}) * p_T`` of a tree expansion.

    Attributes
    ----------
    tree : Tree
    contraction : tuple
        ``(bond, x, y)`` per bond, ``x`` a slot of the smaller vertex and
        ``y`` a slot of the larger one.
    sign : int
        ``m`` in ``{-1, +1}`` (zero-sign terms are not produced).
    reduced : tuple of Slot
        Ordered uncontracted slots.
    scalar : complex or None
        Product of anticommutators, filled in when factors are known.
    """

    tree: Tree
    contraction: tuple
    sign: int
    reduced: tuple
    scalar: complex | None = None
    factors: tuple = field(default=(), repr=False)

    def reduced_factors(self) -> tuple:
        return tuple(self.factors[s.v - 1][s.k] for s in self.reduced)


@lru_cache(maxsize=256)
def expansion_skeleton(sizes: tuple) -> tuple:
    """Structure of the expansion for monomial lengths ``sizes`` (nesting order).

    Returns tuples ``(bonds, contraction, sign, reduced)`` independent of the
    wavefunctions.
    """
    N = len(sizes)
    terms = [((), (), 1, tuple(Slot(1, k) for k in range(sizes[0])))]
    for v in range(2, N + 1):
        P = [Slot(v, k) for k in range(sizes[v - 1])]
        new = []
        for bonds, contr, sign, R in terms:
            for j, x in enumerate(R):          # j = k1 - 1
                for i, y in enumerate(P):      # i = k2 - 1
                    red = tuple(P[:i]) + R[:j] + R[j + 1:] + tuple(P[i + 1:])
                    b = (x.v, v)
                    new.append((((b,) + bonds), ((b, x, y),) + contr,
                                sign * (1 if j % 2 == 0 else -1), red))
        terms = new
    return tuple(terms)


def _check_monomials(monomials) -> list:
    if len(monomials) < 2:
        raise InvalidArgumentError("need at least two monomials")
    for m in monomials:
        if len(m) == 0 or len(m) % 2:
            raise InvalidArgumentError(f"monomials must have even positive length, got {len(m)}")
    if len(monomials) > MAX_ENTRIES or any(len(m) > 2 * MAX_HALF_LENGTH for m in monomials):
        raise ResourceLimitError(
            f"expansion capped at {MAX_ENTRIES} entries of length <= {2 * MAX_HALF_LENGTH}")
    return list(reversed(monomials))  # nesting order


def anticommutator_scalar(a: Factor, b: Factor, dynamics=None) -> complex:
    """Scalar anticommutator of two linear elements.

    ``{a(psi), a^*(phi)} = <psi, phi>``; pairs of the same kind give 0.

    Parameters
    ----------
    a, b : Factor
    dynamics : tuple (h, s_a, s_b), optional
        Evolve ``a`` by ``exp(i s_a h)`` and ``b`` by ``exp(i s_b h)`` first,
        i.e. take the anticommutator of ``tau_{s_a}(a)`` and ``tau_{s_b}(b)``.
    """
    if a.creation == b.creation:
        return 0.0 + 0j
    psi_a, psi_b = a.psi, b.psi
    if dynamics is not None:
        h, sa, sb = dynamics
        E, V = np.linalg.eigh(h)
        psi_a = (V * np.exp(1j * sa * E)) @ (V.conj().T @ psi_a)
        psi_b = (V * np.exp(1j * sb * E)) @ (V.conj().T @ psi_b)
    if a.creation:
        return complex(np.vdot(psi_b, psi_a))
    return complex(np.vdot(psi_a, psi_b))


def expand_multicommutator(monomials: Sequence) -> list:
    """Tree expansion of ``[B_1, [B_2, ..., B_N]]`` for monomials ``B_j``.

    Parameters
    ----------
    monomials : sequence of Monomial
        ``B_1, ..., B_N`` outermost first, each of even length.

    Returns
    -------
    list of TreeTerm
        Terms with nonzero sign and their scalar factors; the multi-commutator
        equals ``sum(t.sign * t.scalar * product(t.reduced_factors()))``.
    """
    nest = _check_monomials(monomials)
    sizes = tuple(len(m) for m in nest)
    factors = tuple(tuple(m) for m in nest)
    trees = {T.bonds: T for T in _trees(len(nest))}
    out = []
    for bonds, contr, sign, red in expansion_skeleton(sizes):
        scal = 1.0 + 0j
        for _, x, y in contr:
            scal *= anticommutator_scalar(factors[y.v - 1][y.k], factors[x.v - 1][x.k])
        out.append(TreeTerm(trees[bonds], contr, sign, red, scal, factors))
    return out


def contraction_maps(tree: Tree, sizes: Sequence[int]):
    """All contraction maps of ``tree``: one slot of each end per bond.

    ``sizes`` are the monomial lengths in nesting order.
    """
    choices = [[(b, Slot(b[0], i), Slot(b[1], j)) for i in range(sizes[b[0] - 1])
                for j in range(sizes[b[1] - 1])] for b in tree.bonds]
    for combo in itertools.product(*choices):
        yield tuple(combo)


def sign_table(sizes: Sequence[int]) -> dict:
    """``{(bonds, frozenset(contraction)): m}`` for all nonzero signs."""
    return {(bonds, frozenset(contr)): sign for bonds, contr, sign, _ in expansion_skeleton(tuple(sizes))}


def tree_sign(tree: Tree, contraction, sizes: Sequence[int]) -> int:
    """Sign ``m_T(x, y)`` in ``{-1, 0, 1}`` of a contraction map."""
    return sign_table(tuple(sizes)).get((tree.bonds, frozenset(contraction)), 0)


def multicommutator_expectation(D: np.ndarray, monomials: Sequence) -> complex:
    """Quasi-free expectation of a multi-commutator via the tree expansion."""
    total = 0.0 + 0j
    for t in expand_multicommutator(monomials):
        if t.scalar != 0:
            total += t.sign * t.scalar * wick_expectation(D, t.reduced_factors())
    return total


# ---------------------------------------------------------------------------
# Tree decay
# ---------------------------------------------------------------------------


def tree_decay_envelope(eps: float, positions) -> float:
    """``sum_T prod_{{k,l} in T} 1 / (1 + |x_k - x_l|^(d + eps))`` over the recursive trees.

    Parameters
    ----------
    eps : float
        Positive decay excess.
    positions : array, shape (N, d)
        Lattice points ``x_1 ... x_N`` in nesting order.
    """
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")
    X = np.asarray(positions, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N, d = X.shape
    if N < 2:
        raise InvalidArgumentError("need at least two positions")
    r = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)
    F = 1.0 / (1.0 + r ** (d + eps))
    # sum over the recursive family factorizes: vertex v attaches to any k < v
    total = 1.0
    for v in range(2, N + 1):
        total *= float(np.sum(F[v - 1, : v - 1]))
    return total


def _shift_constant(d: int, eps: float, reach: float = 2.0) -> float:
    # sup_r (1 + (r + reach)^p) / (1 + r^p), p = d + eps
    p = d + eps
    r = np.concatenate([np.linspace(0.0, 10.0, 2001), np.geomspace(10.0, 1e6, 2001)])
    return float(np.max((1.0 + (r + reach) ** p) / (1.0 + r**p)))


@dataclass
class BoundReport:
    """Sampled multi-commutator expectations against the tree-decay envelope."""

    N: int
    eps: float
    expectations: np.ndarray
    envelopes: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return np.abs(self.expectations) / self.envelopes

    @property
    def fitted_D(self) -> float:
        """Smallest ``D`` with ``|expectation| <= D^(N-1) * envelope`` on the samples."""
        return float(np.max(self.ratios) ** (1.0 / (self.N - 1)))

    def dominated_by(self, D: float) -> bool:
        return bool(np.all(np.abs(self.expectations) <= D ** (self.N - 1) * self.envelopes * (1 + 1e-12)))


def sample_bilinears(box: LatticeBox, N: int, t0: float, t: float, rng, margin: int = 1):
    """Random ``(s_i, x_i, z_i)`` with ``s_i`` in ``[t0, t]``, ``|z_i| = 1`` and ``x_i, x_i + z_i`` in the box."""
    out = []
    r = box.radius - margin
    for _ in range(N):
        s = rng.uniform(t0, t)
        x = rng.integers(-r, r + 1, size=box.d)
        axis = rng.integers(box.d)
        z = np.zeros(box.d, dtype=int)
        z[axis] = rng.choice([-1, 1])
        out.append((s, x, z))
    return out


def check_tree_decay_bound(D: np.ndarray, h: np.ndarray, eps: float, t0: float, t: float,
                           samples, box: LatticeBox, N: int = 3, rng=None) -> BoundReport:
    """Compare sampled multi-commutator expectations with the tree-decay envelope.

    Each sample is a list of ``N`` tuples ``(s_i, x_i, z_i)`` defining the
    evolved bilinears ``tau_{s_i}(a^*_{x_i} a_{x_i + z_i})`` in nesting order.

    Parameters
    ----------
    D : ndarray
        Symbol of the state.
    h : ndarray
        One-particle Hamiltonian generating ``tau``.
    eps : float
    t0, t : float
        Sampling window for the times.
    samples : int or list
        Explicit samples, or the number of random samples to draw with ``rng``.
    box : LatticeBox
    N : int
        Number of entries when sampling.
    """
    if isinstance(samples, (int, np.integer)):
        rng = np.random.default_rng(rng)
        samples = [sample_bilinears(box, N, t0, t, rng) for _ in range(int(samples))]
    E, V = np.linalg.eigh(h)
    exps, envs = [], []
    for smp in samples:
        nest = []
        for s, x, z in smp:
            if not (t0 - 1e-12 <= s <= t + 1e-12):
                raise InvalidArgumentError("sample time outside the window")
            U = (V * np.exp(1j * s * E)) @ V.conj().T
            i, j = box.index(x), box.index(np.asarray(x) + np.asarray(z))
            nest.append(bilinear(U[:, i], U[:, j]))
        exps.append(multicommutator_expectation(D, list(reversed(nest))))
        envs.append(tree_decay_envelope(eps, [np.asarray(x) for _, x, _ in smp]))
    return BoundReport(len(samples[0]), eps, np.array(exps), np.array(envs))


def tree_decay_constant(correlation_D: float, d: int, eps: float) -> float:
    """Tree-decay constant implied by a correlation-decay constant.

    Each bond contributes at most ``4`` slot pairs for bilinears, and the
    contracted sites differ from the base points by at most two unit steps.
    """
    return 4.0 * correlation_D * _shift_constant(d, eps)


# ---------------------------------------------------------------------------
# Heat-production series
# ---------------------------------------------------------------------------


def _check_times(times, t0):
    times = np.asarray(times, dtype=float)
    *s, t = times
    chain = [t] + list(s) + [t0]  # t >= s_1 >= ... >= s_k >= t0
    if any(a < b - 1e-12 for a, b in zip(chain[:-1], chain[1:])):
        raise InvalidArgumentError("times must satisfy t0 <= s_k <= ... <= s_1 <= t")
    return np.array(s), float(t)


def heat_series_coefficient(k: int, times, h: np.ndarray, d_fermi: np.ndarray,
                            A: VectorPotentialSpec, box: LatticeBox) -> float:
    """Integrand ``u_k(s_1, ..., s_k, t)`` of the heat series, by tree expansion.

    ``u_k = sum_{x,y} i^k h_xy rho([W_k, ..., W_1, tau_{t-t0}(a_x^* a_y)])`` with
    ``W_j = tau_{s_j - t0}(W_{s_j})`` expanded into evolved bilinears. Each
    multi-commutator of bilinears is expanded over trees and evaluated with
    Wick's rule in the Fermi state.

    Parameters
    ----------
    k : int
        Order, ``1 <= k <= 5``.
    times : sequence
        ``(s_1, ..., s_k, t)`` with ``t0 <= s_k <= ... <= s_1 <= t``.
    """
    if k < 1:
        raise InvalidArgumentError("order must be at least 1")
    if len(times) != k + 1:
        raise InvalidArgumentError(f"need k + 1 = {k + 1} times")
    s, t = _check_times(times, A.t0)
    if k + 1 > MAX_ENTRIES:
        raise ResourceLimitError(f"order capped at {MAX_ENTRIES - 1}")
    cpl = field_coupling(box, A)
    E, V = np.linalg.eigh(h)

    def ev(tau):
        return (V * np.exp(1j * tau * E)) @ V.conj().T

    # bilinear lists per entry, outermost first: W(s_k), ..., W(s_1), tau(a_x^* a_y)
    entries = []
    for sj in s[::-1]:
        w = cpl.w(sj)
        U = ev(sj - A.t0)
        nz = np.argwhere(w != 0)
        entries.append([(w[a, b], bilinear(U[:, a], U[:, b])) for a, b in nz])
    U = ev(t - A.t0)
    nz = np.argwhere(h != 0)
    entries.append([(h[a, b], bilinear(U[:, a], U[:, b])) for a, b in nz])
    if any(len(e) == 0 for e in entries):
        return 0.0
    skeleton = expansion_skeleton((2,) * (k + 1))
    total = 0.0 + 0j
    for combo in itertools.product(*entries):
        coef = np.prod([c for c, _ in combo])
        nest = [m for _, m in reversed(combo)]
        val = 0.0 + 0j
        for _, contr, sign, red in skeleton:
            scal = 1.0 + 0j
            for _, x, y in contr:
                scal *= anticommutator_scalar(nest[y.v - 1][y.k], nest[x.v - 1][x.k])
                if scal == 0:
                    break
            if scal != 0:
                val += sign * scal * wick_expectation(d_fermi, [nest[q.v - 1][q.k] for q in red])
        total += coef * val
    return float(np.real((1j) ** k * total))


def heat_series_coefficient_onebody(k: int, times, h: np.ndarray, d_fermi: np.ndarray,
                                    A: VectorPotentialSpec, box: LatticeBox) -> float:
    """Same as :func:`heat_series_coefficient` through one-particle commutators.

    Uses that commutators of second-quantized bilinears are second quantizations
    of matrix commutators, and ``rho(dGamma(X)) = Tr(X d_fermi)``.
    """
    s, t = _check_times(times, A.t0)
    cpl = field_coupling(box, A)
    E, V = np.linalg.eigh(h)

    def ev(tau):
        return (V * np.exp(1j * tau * E)) @ V.conj().T

    U = ev(t - A.t0)
    C = U @ h @ U.conj().T
    for sj in s:  # innermost is s_1
        Uj = ev(sj - A.t0)
        Wj = Uj @ cpl.w(sj) @ Uj.conj().T
        C = Wj @ C - C @ Wj
    return float(np.real((1j) ** k * np.trace(C @ d_fermi)))


@dataclass
class SeriesReport:
    """Truncated heat series at the end of the grid."""

    orders: np.ndarray  # contribution of order k = 1..K
    grid: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.orders))

    def ratios(self) -> np.ndarray:
        """Successive ratios ``|order k+1| / |order k|`` for ``k >= 2``."""
        o = np.abs(self.orders[1:])
        return o[1:] / o[:-1]


def heat_series_sum(K: int, grid, h: np.ndarray, d_fermi: np.ndarray, A: VectorPotentialSpec,
                    box: LatticeBox, t: float | None = None) -> SeriesReport:
    """Heat series truncated at order ``K`` and integrated over the time simplex.

    The order-``k`` integral of ``u_k`` over ``t0 <= s_k <= ... <= s_1 <= t`` equals
    ``Tr(h Y_k(t))`` with ``Y_0 = d_fermi`` and
    ``Y_k(sigma) = -i int_{t0}^sigma [w~(s), Y_{k-1}(s)] ds``, where ``w~`` is the
    field energy operator in the interaction picture. The nested integrals
    are cumulative trapezoid sums on a shared uniform grid.

    Parameters
    ----------
    K : int
        Truncation order, ``K >= 1``.
    grid : int or array
        Number of intervals on ``[t0, min(t, t1)]``, or the grid itself.
    t : float, optional
        Evaluation time, default ``A.t1`` (the series is constant afterwards).
    """
    if K < 1:
        raise InvalidArgumentError("truncation order must be at least 1")
    t = A.t1 if t is None else t
    if t <= A.t0:
        return SeriesReport(np.zeros(K), np.array([A.t0]))
    t_top = min(t, A.t1)
    if np.isscalar(grid):
        grid = np.linspace(A.t0, t_top, int(grid) + 1)
    grid = np.asarray(grid, dtype=float)
    cpl = field_coupling(box, A)
    E, V = np.linalg.eigh(h)
    U = np.stack([(V * np.exp(1j * (tau - A.t0) * E)) @ V.conj().T for tau in grid])
    wt = U @ np.stack([cpl.w(tau) for tau in grid]) @ np.conj(np.swapaxes(U, 1, 2))
    dt = np.diff(grid)
    Y = np.broadcast_to(d_fermi.astype(complex), wt.shape)
    orders = []
    for _ in range(K):
        f = -1j * (wt @ Y - Y @ wt)
        cum = np.zeros_like(f)
        cum[1:] = np.cumsum(0.5 * dt[:, None, None] * (f[1:] + f[:-1]), axis=0)
        Y = cum
        orders.append(float(np.real(np.trace(h @ Y[-1]))))
    return SeriesReport(np.array(orders), grid)
