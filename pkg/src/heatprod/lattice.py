"""
Lattice geometry, disorder, discrete Laplacians and electromagnetic coupling.

Conventions
-----------
Lattice spacing, hbar and the particle charge magnitude are all set to one.
A box of half side ``L`` contains the sites ``x`` in ``Z^d`` with
``|x_i| <= floor(L)``, enumerated lexicographically (last coordinate fastest).
Hopping that would leave the box is dropped while the diagonal of the
Laplacian stays ``2d`` (open boundary).

A vector potential is the separable field

    A(t, x) = eta * g(t) * f(x / l) * e

with a time profile ``g`` supported in ``[t0, t1]``, a space profile ``f``
supported in ``[-1, 1]^d`` and a unit direction ``e``. The minimal coupling
multiplies the hopping amplitude from ``y`` to ``x`` by

    exp(-i * int_0^1 A(t, a y + (1 - a) x) . (y - x) da)

where the line integral is done with Gauss-Legendre quadrature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Union

import numpy as np

from .errors import InvalidArgumentError

HERMITIAN_TOL = 1e-12


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeBox:
    """Finite cubic box of ``Z^d``.

    Parameters
    ----------
    d : int
        Spatial dimension, ``d >= 1``.
    L : float
        Half side length, ``L > 0``. Only ``floor(L)`` matters for the sites.
    """

    d: int
    L: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidArgumentError(f"dimension must be a positive integer, got {self.d!r}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise InvalidArgumentError(f"half side must be positive, got {self.L!r}")
        if np.floor(self.L) < 0:
            raise InvalidArgumentError("half side too small")

    @property
    def radius(self) -> int:
        """Integer part of the half side."""
        return int(np.floor(self.L))

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    @property
    def n(self) -> int:
        """Number of sites."""
        return self.width**self.d

    @cached_property
    def sites(self) -> np.ndarray:
        """Integer site coordinates, shape ``(n, d)``, lexicographic order."""
        r = self.radius
        pts = np.array(list(itertools.product(range(-r, r + 1), repeat=self.d)), dtype=int)
        pts.setflags(write=False)
        return pts

    @cached_property
    def _strides(self) -> np.ndarray:
        return self.width ** np.arange(self.d - 1, -1, -1)

    def index(self, x) -> int:
        """Index of site ``x``; raises if ``x`` is outside the box."""
        x = np.asarray(x, dtype=int).reshape(-1)
        if x.shape[0] != self.d or np.any(np.abs(x) > self.radius):
            raise InvalidArgumentError(f"site {tuple(x)} not in box")
        return int(np.dot(x + self.radius, self._strides))

    def site(self, i: int) -> tuple:
        """Coordinates of site number ``i``."""
        return tuple(int(v) for v in self.sites[i])

    def contains(self, other: "LatticeBox") -> bool:
        return other.d == self.d and other.radius <= self.radius

    def embedding(self, sub: "LatticeBox") -> np.ndarray:
        """Indices in ``self`` of the sites of ``sub`` (in ``sub`` order)."""
        if not self.contains(sub):
            raise InvalidArgumentError("sub box is not contained in box")
        return (sub.sites + self.radius) @ self._strides

    @cached_property
    def bonds(self) -> np.ndarray:
        """Nearest-neighbour pairs ``(i, j)`` with ``x_j = x_i + e_k``, shape ``(m, 2)``."""
        out = []
        idx = np.arange(self.n)
        for k in range(self.d):
            ok = self.sites[:, k] < self.radius
            out.append(np.stack([idx[ok], idx[ok] + self._strides[k]], axis=1))
        b = np.concatenate(out, axis=0) if out else np.zeros((0, 2), dtype=int)
        b.setflags(write=False)
        return b


def build_box(d: int, L: float) -> LatticeBox:
    """Build the box ``{x in Z^d : |x_i| <= floor(L)}``.

    Parameters
    ----------
    d : int
        Dimension, positive.
    L : float
        Half side, positive.
    """
    return LatticeBox(d, float(L))


# ---------------------------------------------------------------------------
# Disorder
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DisorderField:
    """Static random potential on a box, values in ``[-1, 1]``."""

    box: LatticeBox
    values: np.ndarray
    seed: int


def _shell_order(box: LatticeBox) -> np.ndarray:
    # sites sorted by sup-norm radius, then lexicographically
    shell = np.max(np.abs(box.sites), axis=1) if box.n else np.zeros(0, dtype=int)
    return np.lexsort((np.arange(box.n), shell))


def sample_disorder(box: LatticeBox, seed: int) -> DisorderField:
    """Draw i.i.d. uniform values on ``[-1, 1]``, one per site.

    Values are drawn shell by shell (by sup-norm distance to the origin), so
    a smaller box always sees the same potential as a larger one built from
    the same seed. This keeps the disorder realization fixed when the box
    grows.

    Parameters
    ----------
    box : LatticeBox
    seed : int
        Any integer; reduced modulo ``2**64``.
    """
    seed = int(seed) % 2**64
    rng = np.random.default_rng(seed)
    stream = rng.uniform(-1.0, 1.0, size=box.n)
    values = np.empty(box.n)
    values[_shell_order(box)] = stream
    values.setflags(write=False)
    return DisorderField(box, values, seed)


# ---------------------------------------------------------------------------
# Static operators
# ---------------------------------------------------------------------------


def check_hermitian(M: np.ndarray, name: str = "operator", tol: float = HERMITIAN_TOL) -> None:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError(f"{name} must be a square matrix, got shape {M.shape}")
    defect = np.max(np.abs(M - M.conj().T)) if M.size else 0.0
    if not defect <= tol * max(1.0, float(np.max(np.abs(M))) if M.size else 1.0):
        raise InvalidArgumentError(f"{name} is not Hermitian (defect {defect:.3e})")


def laplacian(box: LatticeBox) -> np.ndarray:
    """Discrete Laplacian with open boundary: ``2d`` on the diagonal, ``-1`` on bonds."""
    M = 2.0 * box.d * np.eye(box.n)
    i, j = box.bonds[:, 0], box.bonds[:, 1]
    M[i, j] = -1.0
    M[j, i] = -1.0
    return M


def hamiltonian(box: LatticeBox, omega: DisorderField, lam: float) -> np.ndarray:
    """Disordered one-particle Hamiltonian ``laplacian + lam * diag(omega)``.

    Parameters
    ----------
    box : LatticeBox
    omega : DisorderField
        Must live on ``box``.
    lam : float
        Disorder strength, ``lam >= 0``.
    """
    if lam < 0:
        raise InvalidArgumentError(f"disorder strength must be nonnegative, got {lam}")
    if omega.box.d != box.d or omega.box.radius != box.radius:
        raise InvalidArgumentError("disorder field lives on a different box")
    return laplacian(box) + lam * np.diag(omega.values)


# ---------------------------------------------------------------------------
# Vector potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    """Real profile supported in ``[-1, 1]`` with its derivative."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def _bump_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    q = 1.0 - ui * ui
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * ui / (q * q))
    return out


def _cos2(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, np.cos(0.5 * np.pi * u) ** 2, 0.0)


def _cos2_prime(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, -0.5 * np.pi * np.sin(np.pi * u), 0.0)


PROFILES: dict[str, Profile] = {
    "bump": Profile("bump", _bump, _bump_prime),
    "cos2": Profile("cos2", _cos2, _cos2_prime),
}


def register_profile(profile: Profile) -> None:
    """Make a user profile available by name (e.g. from JSON configs)."""
    PROFILES[profile.name] = profile


def _resolve(p: Union[str, Profile]) -> Profile:
    if isinstance(p, Profile):
        return p
    try:
        return PROFILES[p]
    except KeyError:
        raise InvalidArgumentError(f"unknown profile {p!r}; known: {sorted(PROFILES)}") from None


@dataclass(frozen=True)
class VectorPotentialSpec:
    """Separable vector potential ``A(t, x) = eta g(t) f(x / l) e``.

    Parameters
    ----------
    eta : float
        Field strength.
    l : float
        Spatial scale; the field lives in ``|x_i| < l``.
    t0, t1 : float
        Switch-on and switch-off times, ``t0 < t1``.
    direction : tuple of float
        Unit vector ``e``; its length fixes the dimension.
    time_profile, space_profile : str or Profile
        Profiles on ``[-1, 1]``. The time profile is applied to the affine
        rescaling of ``[t0, t1]`` onto ``[-1, 1]``; the space profile is
        applied per coordinate and multiplied.
    quadrature_nodes : int
        Gauss-Legendre nodes for the bond line integral.
    """

    eta: float
    l: float
    t0: float = 0.0
    t1: float = 1.0
    direction: tuple = (1.0,)
    time_profile: Union[str, Profile] = "bump"
    space_profile: Union[str, Profile] = "bump"
    quadrature_nodes: int = 16

    def __post_init__(self):
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))
        if not self.t0 < self.t1:
            raise InvalidArgumentError(f"need t0 < t1, got t0={self.t0}, t1={self.t1}")
        if not self.l > 0:
            raise InvalidArgumentError(f"scale l must be positive, got {self.l}")
        if len(self.direction) < 1 or abs(np.linalg.norm(self.direction) - 1.0) > 1e-12:
            raise InvalidArgumentError(f"direction must be a unit vector, got {self.direction}")
        if int(self.quadrature_nodes) != self.quadrature_nodes or self.quadrature_nodes < 1:
            raise InvalidArgumentError("quadrature_nodes must be a positive integer")
        _resolve(self.time_profile)
        _resolve(self.space_profile)

    @property
    def d(self) -> int:
        return len(self.direction)

    def _s(self, t):
        return (2.0 * np.asarray(t, dtype=float) - self.t0 - self.t1) / (self.t1 - self.t0)

    def g(self, t):
        """Time profile at ``t``."""
        return _resolve(self.time_profile).value(self._s(t))

    def dg(self, t):
        """Analytic time derivative of the time profile."""
        return _resolve(self.time_profile).derivative(self._s(t)) * 2.0 / (self.t1 - self.t0)

    def f(self, x):
        """Space profile at ``x / l``; ``x`` has shape ``(..., d)``."""
        u = np.asarray(x, dtype=float) / self.l
        return np.prod(_resolve(self.space_profile).value(u), axis=-1)

    def potential(self, t, x) -> np.ndarray:
        """Vector ``A(t, x)`` in ``R^d``."""
        return self.eta * float(self.g(t)) * float(self.f(np.asarray(x, dtype=float))) * np.array(self.direction)

    def with_eta(self, eta: float) -> "VectorPotentialSpec":
        return VectorPotentialSpec(eta, self.l, self.t0, self.t1, self.direction,
                                   self.time_profile, self.space_profile, self.quadrature_nodes)

    def to_dict(self) -> dict:
        def name(p):
            return p if isinstance(p, str) else p.name

        return {
            "eta": self.eta, "l": self.l, "t0": self.t0, "t1": self.t1,
            "direction": list(self.direction), "time_profile": name(self.time_profile),
            "space_profile": name(self.space_profile), "quadrature_nodes": self.quadrature_nodes,
        }


def electric_field(A: VectorPotentialSpec, t: float, x) -> np.ndarray:
    """Electric field ``E(t, x) = -d/dt A(t, x)`` from the analytic profile derivative."""
    return -A.eta * float(A.dg(t)) * float(A.f(np.asarray(x, dtype=float))) * np.array(A.direction)


@dataclass(frozen=True, eq=False)
class FieldCoupling:
    """Precomputed bond data of a vector potential on a box.

    Only bonds whose line integral of the space profile is nonzero are kept.
    The phase of bond ``(i, j)`` at time ``t`` is ``g(t) * coef``, where
    ``coef = eta * (e . (x_j - x_i)) * int_0^1 f(segment) da``.
    """

    box: LatticeBox
    A: VectorPotentialSpec
    i: np.ndarray = field(repr=False)
    j: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)

    def phases(self, t: float) -> np.ndarray:
        return float(self.A.g(t)) * self.coef

    def peierls(self, t: float) -> np.ndarray:
        M = laplacian(self.box).astype(complex)
        ph = np.exp(-1j * self.phases(t))
        M[self.i, self.j] = -ph
        M[self.j, self.i] = -ph.conj()
        return M

    def w(self, t: float) -> np.ndarray:
        """Field energy operator: Peierls Laplacian minus Laplacian."""
        W = np.zeros((self.box.n, self.box.n), dtype=complex)
        g = float(self.A.g(t))
        if g == 0.0 or self.coef.size == 0:
            return W
        # -(e^{-i phi} - 1), written to stay accurate for small phases
        phi = g * self.coef
        val = 2.0 * np.sin(0.5 * phi) ** 2 + 1j * np.sin(phi)
        W[self.i, self.j] = val
        W[self.j, self.i] = val.conj()
        return W

    def dw(self, t: float) -> np.ndarray:
        """Analytic time derivative of :meth:`w`."""
        W = np.zeros((self.box.n, self.box.n), dtype=complex)
        dg = float(self.A.dg(t))
        if dg == 0.0 or self.coef.size == 0:
            return W
        phi = float(self.A.g(t)) * self.coef
        val = 1j * dg * self.coef * np.exp(-1j * phi)
        W[self.i, self.j] = val
        W[self.j, self.i] = val.conj()
        return W

    @property
    def support_sites(self) -> np.ndarray:
        """Indices of sites touched by a coupled bond."""
        return np.unique(np.concatenate([self.i, self.j]))


@lru_cache(maxsize=64)
def field_coupling(box: LatticeBox, A: VectorPotentialSpec) -> FieldCoupling:
    """Bond phase data of ``A`` on ``box`` (cached)."""
    if A.d != box.d:
        raise InvalidArgumentError(f"potential has dimension {A.d}, box has {box.d}")
    b = box.bonds
    empty = np.zeros(0, dtype=int)
    if b.shape[0] == 0 or A.eta == 0.0:
        return FieldCoupling(box, A, empty, empty, np.zeros(0))
    nodes, weights = np.polynomial.legendre.leggauss(A.quadrature_nodes)
    alpha = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    x = box.sites[b[:, 0]].astype(float)
    y = box.sites[b[:, 1]].astype(float)
    pts = x[:, None, :] + alpha[None, :, None] * (y - x)[:, None, :]
    integral = A.f(pts) @ weights
    coef = A.eta * ((y - x) @ np.array(A.direction)) * integral
    keep = coef != 0.0
    return FieldCoupling(box, A, b[keep, 0].copy(), b[keep, 1].copy(), coef[keep])


def peierls_laplacian(box: LatticeBox, A: VectorPotentialSpec, t: float) -> np.ndarray:
    """Laplacian with hopping amplitudes multiplied by the Peierls phases at time ``t``."""
    return field_coupling(box, A).peierls(t)


def field_energy_operator(box: LatticeBox, A: VectorPotentialSpec, t: float) -> np.ndarray:
    """``w_t = peierls_laplacian(box, A, t) - laplacian(box)``."""
    return field_coupling(box, A).w(t)


def field_energy_derivative(box: LatticeBox, A: VectorPotentialSpec, t: float) -> np.ndarray:
    """Time derivative of :func:`field_energy_operator` from the analytic profile derivative."""
    return field_coupling(box, A).dw(t)
