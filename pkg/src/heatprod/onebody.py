"""
One-particle propagators, Dyson-Phillips truncations, Fermi symbols and
correlation-decay diagnostics.

All matrix functions go through Hermitian eigendecompositions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError
from .lattice import LatticeBox, VectorPotentialSpec, check_hermitian, field_coupling


def expm_hermitian(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i t H)`` for Hermitian ``H``."""
    E, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * t * E)) @ V.conj().T


def free_propagator(h: np.ndarray, t: float) -> np.ndarray:
    """Free one-particle propagator ``exp(-i t h)``.

    Parameters
    ----------
    h : ndarray
        Hermitian one-particle Hamiltonian.
    t : float
        Time.
    """
    check_hermitian(h, "h")
    return expm_hermitian(h, t)


def default_step(A: VectorPotentialSpec) -> float:
    return (A.t1 - A.t0) / 400.0


def uniform_grid(s: float, t: float, step: float) -> np.ndarray:
    """Uniform grid from ``s`` to ``t`` with spacing at most ``step``."""
    if step <= 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")
    if t < s:
        raise InvalidArgumentError(f"need t >= s, got s={s}, t={t}")
    m = max(1, int(math.ceil((t - s) / step - 1e-9))) if t > s else 0
    return np.linspace(s, t, m + 1)


def midpoint_steps(box: LatticeBox, h: np.ndarray, A: VectorPotentialSpec, grid: np.ndarray):
    """Yield the one-step exponential-midpoint propagators along ``grid``.

    Steps whose midpoint lies outside ``(t0, t1)`` see no field and reuse a
    cached free step of the same width.
    """
    cpl = field_coupling(box, A)
    free_cache: dict[float, np.ndarray] = {}
    for a, b in zip(grid[:-1], grid[1:]):
        dt = b - a
        tm = 0.5 * (a + b)
        if cpl.coef.size == 0 or not (A.t0 < tm < A.t1):
            key = round(dt, 15)
            if key not in free_cache:
                free_cache[key] = expm_hermitian(h, dt)
            yield free_cache[key]
        else:
            yield expm_hermitian(h + cpl.w(tm), dt)


def driven_propagator(box: LatticeBox, h: np.ndarray, A: VectorPotentialSpec,
                      s: float, t: float, step: float | None = None) -> np.ndarray:
    """Propagator ``U_{t,s}`` of ``h + w_t`` by the exponential midpoint rule.

    Parameters
    ----------
    box : LatticeBox
        Box carrying ``h``.
    h : ndarray
        Static Hamiltonian (Laplacian plus potential).
    A : VectorPotentialSpec
    s, t : float
        Initial and final time, ``t >= s``.
    step : float, optional
        Maximal step width; defaults to ``(t1 - t0) / 400``.
    """
    check_hermitian(h, "h")
    step = default_step(A) if step is None else step
    grid = uniform_grid(s, t, step)
    U = np.eye(box.n, dtype=complex)
    for E in midpoint_steps(box, h, A, grid):
        U = E @ U
    return U


def dyson_phillips_propagator(box: LatticeBox, h: np.ndarray, A: VectorPotentialSpec,
                              s: float, t: float, K: int, grid: np.ndarray | int | None = None,
                              return_orders: bool = False):
    """Dyson-Phillips expansion of ``U_{t,s}`` truncated at order ``K``.

    The order-``k`` term is the iterated integral over the simplex
    ``t > s_1 > ... > s_k > s`` of ``U_{t-s_1} w_{s_1} ... w_{s_k} U_{s_k-s}``
    times ``(-i)^k``. It is built recursively as a cumulative trapezoid
    integral on the shared grid.

    Parameters
    ----------
    K : int
        Truncation order, ``K >= 0``.
    grid : array or int, optional
        Uniform grid from ``s`` to ``t``, or the number of intervals
        (default 400).
    return_orders : bool
        Also return the list of the individual order terms.
    """
    check_hermitian(h, "h")
    if K < 0:
        raise InvalidArgumentError("truncation order must be nonnegative")
    if t < s:
        raise InvalidArgumentError("need t >= s")
    if grid is None:
        grid = 400
    if np.isscalar(grid):
        grid = np.linspace(s, t, int(grid) + 1)
    grid = np.asarray(grid, dtype=float)
    if abs(grid[0] - s) > 1e-12 or abs(grid[-1] - t) > 1e-12:
        raise InvalidArgumentError("grid must run from s to t")
    cpl = field_coupling(box, A)
    E, V = np.linalg.eigh(h)

    def U(tau):
        return (V * np.exp(-1j * tau * E)) @ V.conj().T

    m = grid.size
    # T_k(tau) for all grid points; T_0(tau) = U_{tau - s}
    prev = np.stack([U(tau - s) for tau in grid])
    orders = [prev[-1]]
    if K > 0:
        back = np.stack([U(s - tau) for tau in grid])  # e^{i (tau - s) h}
        fwd = np.stack([U(tau - s) for tau in grid])
        ws = np.stack([cpl.w(tau) for tau in grid])
        dt = np.diff(grid)
        for _ in range(K):
            integrand = back @ ws @ prev
            cum = np.zeros_like(integrand)
            cum[1:] = np.cumsum(0.5 * dt[:, None, None] * (integrand[1:] + integrand[:-1]), axis=0)
            prev = -1j * (fwd @ cum)
            orders.append(prev[-1])
    total = np.sum(orders, axis=0) if m else np.eye(box.n)
    return (total, orders) if return_orders else total


def fermi_symbol(h: np.ndarray, beta: float) -> np.ndarray:
    """Fermi-Dirac symbol ``(1 + exp(beta h))^{-1}``.

    Parameters
    ----------
    h : ndarray
        Hermitian one-particle Hamiltonian.
    beta : float
        Inverse temperature, ``beta > 0``.
    """
    if not beta > 0:
        raise InvalidArgumentError(f"inverse temperature must be positive, got {beta}")
    check_hermitian(h, "h")
    E, V = np.linalg.eigh(h)
    D = (V * expit(-beta * E)) @ V.conj().T
    return 0.5 * (D + D.conj().T)


# ---------------------------------------------------------------------------
# Correlation decay
# ---------------------------------------------------------------------------


@dataclass
class DecayReport:
    """Maximal propagator amplitude per lattice separation.

    Attributes
    ----------
    separations : ndarray
        Distinct Euclidean separations ``|x - y|``.
    max_amplitude : ndarray
        ``max |<e_x, exp(i t h) e_y>|`` at each separation.
    D : float
        Smallest constant with ``max_amplitude <= D / (1 + r^(d + eps))``.
    exponent : float
        ``d + eps``.
    """

    separations: np.ndarray
    max_amplitude: np.ndarray
    D: float
    exponent: float

    @property
    def bound_value(self) -> np.ndarray:
        return self.D / (1.0 + self.separations**self.exponent)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["separation", "max_amplitude", "bound_value"])
        for r, a, b in zip(self.separations, self.max_amplitude, self.bound_value):
            w.writerow([repr(float(r)), repr(float(a)), repr(float(b))])
        return buf.getvalue()


def _separation_table(box: LatticeBox):
    X = box.sites.astype(float)
    r2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    r2i = np.rint(r2).astype(int)
    vals, inv = np.unique(r2i, return_inverse=True)
    return np.sqrt(vals), inv.reshape(r2.shape)


def correlation_decay_profile(h: np.ndarray, t: float | np.ndarray, eps: float,
                              box: LatticeBox, interior: LatticeBox | None = None) -> DecayReport:
    """Tabulate ``|<e_x, exp(i t h) e_y>|`` against the separation ``|x - y|``.

    Parameters
    ----------
    h : ndarray
        One-particle Hamiltonian on ``box``.
    t : float or array of float
        Time, or several times (the maximum over all of them is taken).
    eps : float
        Decay excess, the bound decays like ``r^-(d + eps)``.
    box : LatticeBox
    interior : LatticeBox, optional
        Only pairs with both sites in this centered sub-box enter the
        maximum, which keeps boundary effects out of bulk comparisons.
    """
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")
    check_hermitian(h, "h")
    E, V = np.linalg.eigh(h)
    seps, inv = _separation_table(box)
    idx = np.arange(box.n) if interior is None else box.embedding(interior)
    inv = inv[np.ix_(idx, idx)]
    amp = np.full(seps.size, -1.0)
    for tau in np.atleast_1d(np.asarray(t, dtype=float)):
        M = np.abs((V[idx] * np.exp(1j * tau * E)) @ V[idx].conj().T)
        np.maximum.at(amp, inv.ravel(), M.ravel())
    seen = amp >= 0
    seps, amp = seps[seen], amp[seen]
    expo = box.d + eps
    D = float(np.max(amp * (1.0 + seps**expo)))
    return DecayReport(seps, amp, D, expo)
