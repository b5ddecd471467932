"""
Quasi-free state calculus on the one-particle level.

A gauge-invariant quasi-free state is encoded by its symbol ``D`` with
``rho(a_x^* a_y) = D[y, x]``. Consequently ``rho(sum h_xy a_x^* a_y) = Tr(h D)``.
Creation and annihilation operators are ``a^*(f) = sum_x f(x) a_x^*`` and
``a(g) = sum_x conj(g(x)) a_x``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import InvalidArgumentError, NumericInconsistencyError
from .lattice import LatticeBox, VectorPotentialSpec, check_hermitian, field_coupling
from .onebody import default_step, fermi_symbol, midpoint_steps, uniform_grid

CLAMP = 1e-14


# ---------------------------------------------------------------------------
# Monomials and Wick expectations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Factor:
    """One creation (``creation=True``) or annihilation operator with its wavefunction."""

    creation: bool
    psi: np.ndarray

    def evolved(self, U: np.ndarray) -> "Factor":
        """Factor with wavefunction ``U psi``."""
        return Factor(self.creation, U @ self.psi)


Monomial = tuple  # tuple of Factor


def create(f) -> Factor:
    return Factor(True, np.asarray(f, dtype=complex))


def annihilate(g) -> Factor:
    return Factor(False, np.asarray(g, dtype=complex))


def bilinear(f, g) -> Monomial:
    """The monomial ``a^*(f) a(g)``."""
    return (create(f), annihilate(g))


def _pair(D: np.ndarray, a: Factor, b: Factor) -> complex:
    # two-point function rho(a b)
    if a.creation == b.creation:
        return 0.0
    if a.creation:  # a^*(f) a(g) -> <g, D f>
        return np.vdot(b.psi, D @ a.psi)
    # a(g) a^*(f) -> <g, (1 - D) f>
    return np.vdot(a.psi, b.psi) - np.vdot(a.psi, D @ b.psi)


def pfaffian(A: np.ndarray) -> complex:
    """Pfaffian of a skew-symmetric matrix by Gaussian elimination with pivoting."""
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    if n % 2:
        return 0.0
    pf = 1.0 + 0j
    for k in range(0, n - 1, 2):
        p = k + 1 + int(np.argmax(np.abs(A[k + 1:, k])))
        if p != k + 1:
            A[[k + 1, p], :] = A[[p, k + 1], :]
            A[:, [k + 1, p]] = A[:, [p, k + 1]]
            pf = -pf
        if A[k + 1, k] == 0:
            return 0.0
        pf *= A[k, k + 1]
        if k + 2 < n:
            tau = A[k, k + 2:] / A[k, k + 1]
            A[k + 2:, k + 2:] += np.outer(tau, A[k + 2:, k + 1]) - np.outer(A[k + 2:, k + 1], tau)
    return pf


def wick_expectation(D: np.ndarray, monomial: Sequence[Factor]) -> complex:
    """Expectation of an ordered product of creation/annihilation operators.

    Uses the pair contraction expansion ``rho(c_1 ... c_2m) =
    sum_j (-1)^j rho(c_1 c_j) rho(c_2 ... (no c_j) ... c_2m)``, which is the
    Pfaffian of the antisymmetric matrix of ordered two-point functions.
    The Pfaffian is evaluated by elimination rather than by the factorial
    recursion.

    Parameters
    ----------
    D : ndarray
        Symbol of the state.
    monomial : sequence of Factor
    """
    m = len(monomial)
    if m == 0:
        return 1.0 + 0j
    ncre = sum(f.creation for f in monomial)
    if 2 * ncre != m:
        return 0.0 + 0j
    if m == 2:
        return complex(_pair(D, monomial[0], monomial[1]))
    M = np.zeros((m, m), dtype=complex)
    for i in range(m):
        for j in range(i + 1, m):
            M[i, j] = _pair(D, monomial[i], monomial[j])
            M[j, i] = -M[i, j]
    return complex(pfaffian(M))


def determinant_expectation(D: np.ndarray, fs: Sequence, gs: Sequence) -> complex:
    """``rho(a^*(f_1)...a^*(f_n) a(g_n)...a(g_1)) = det[<g_i, D f_j>]``."""
    if len(fs) != len(gs):
        return 0.0 + 0j
    G = np.array([[np.vdot(g, D @ f) for f in fs] for g in gs], dtype=complex)
    return complex(np.linalg.det(G)) if len(fs) else 1.0 + 0j


# ---------------------------------------------------------------------------
# Symbols, energies, entropy
# ---------------------------------------------------------------------------


def evolve_symbol(d: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Symbol ``U d U^*`` of the state evolved by the one-particle unitary ``U``."""
    d = np.asarray(d)
    U = np.asarray(U)
    if d.shape != U.shape or d.ndim != 2:
        raise InvalidArgumentError(f"dimension mismatch: symbol {d.shape}, unitary {U.shape}")
    return U @ d @ U.conj().T


def _same_shape(*ms):
    s = ms[0].shape
    for m in ms[1:]:
        if m.shape != s:
            raise InvalidArgumentError(f"dimension mismatch: {s} vs {m.shape}")


def internal_energy_increment(D_t: np.ndarray, d: np.ndarray, h: np.ndarray) -> float:
    """``S = Re Tr(h (D_t - d))``."""
    _same_shape(D_t, d, h)
    return float(np.real(np.vdot(h.conj().T, D_t - d)))


def potential_energy_increment(D_t: np.ndarray, w_t: np.ndarray) -> float:
    """``P = Re Tr(w_t D_t)``."""
    _same_shape(D_t, w_t)
    return float(np.real(np.vdot(w_t.conj().T, D_t)))


def work_integral(times: np.ndarray, integrand: np.ndarray, t: float | None = None):
    """Cumulative work ``int_{t0}^t Re Tr(dw_s D_s) ds`` by composite Simpson.

    Parameters
    ----------
    times : ndarray
        Uniform grid starting at the switch-on time.
    integrand : ndarray
        ``Re Tr(dw_s D_s)`` on the grid.
    t : float, optional
        If given, return only the value at this grid time. Otherwise return
        the whole cumulative array.

    Notes
    -----
    Every second grid point is reached by a plain composite Simpson rule; the
    remaining points use the standard cumulative Simpson variant. ``times``
    and ``integrand`` must have the same length and a uniform spacing.
    """
    times = np.asarray(times, dtype=float)
    f = np.asarray(integrand, dtype=float)
    if times.shape != f.shape or times.ndim != 1:
        raise InvalidArgumentError("grid and integrand lengths differ")
    if times.size < 3:
        if times.size == 2:
            out = np.array([0.0, 0.5 * (times[1] - times[0]) * (f[0] + f[1])])
        else:
            out = np.zeros(times.size)
    else:
        dt = np.diff(times)
        if np.max(np.abs(dt - dt[0])) > 1e-9 * max(1.0, abs(dt[0])):
            raise InvalidArgumentError("work integral needs a uniform grid")
        out = np.concatenate([[0.0], cumulative_simpson(f, dx=dt[0])])
    if t is None:
        return out
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise InvalidArgumentError(f"time {t} is not a grid point")
    return float(out[k])


def _logs(D: np.ndarray):
    E, V = np.linalg.eigh(0.5 * (D + D.conj().T))
    p = np.clip(E, CLAMP, 1.0 - CLAMP)
    return E, V, p


def quasifree_relative_entropy(D1: np.ndarray, D2: np.ndarray, log_odds2: np.ndarray | None = None) -> float:
    """Relative entropy of two quasi-free states from their symbols.

    ``Tr[D1 (ln D1 - ln D2)] + Tr[(1 - D1)(ln(1 - D1) - ln(1 - D2))]`` with the
    spectra clamped to ``[1e-14, 1 - 1e-14]``; ``0 ln 0`` is taken as zero.

    Parameters
    ----------
    D1, D2 : ndarray
        Symbols of the two states.
    log_odds2 : ndarray, optional
        ``ln(D2 (1 - D2)^{-1})`` if known exactly, e.g. ``-beta h`` for a
        Fermi symbol. Eigenvalues of ``D2`` close to 0 or 1 are only known to
        absolute precision, so passing it avoids a loss of relative accuracy
        in their logarithms. ``D2`` is then not used.
    """
    D1 = np.asarray(D1)
    D2 = np.asarray(D2)
    _same_shape(D1, D2)
    E1, _, p1 = _logs(D1)
    q1 = 1.0 - p1
    # entropy-like part, with 0 ln 0 = 0 for eigenvalues at the clamp
    ent = np.where(E1 <= CLAMP, 0.0, p1 * np.log(p1)) + np.where(E1 >= 1 - CLAMP, 0.0, q1 * np.log(q1))
    # cross part: Tr[D1 ln D2] + Tr[(1-D1) ln(1-D2)] = Tr[D1 (ln D2 - ln(1-D2))] + Tr ln(1-D2)
    if log_odds2 is None:
        _, V2, p2 = _logs(D2)
        K = (V2 * (np.log(p2) - np.log1p(-p2))) @ V2.conj().T
        log_vacancy = np.sum(np.log1p(-p2))
    else:
        K = np.asarray(log_odds2)
        _same_shape(D1, K)
        log_vacancy = -np.sum(np.logaddexp(0.0, np.linalg.eigvalsh(0.5 * (K + K.conj().T))))
    cross = np.real(np.vdot(K.conj().T, D1)) + log_vacancy
    return float(np.sum(ent) - cross)


def heat_production(D_t: np.ndarray, d_fermi: np.ndarray, h: np.ndarray, beta: float,
                    check: bool = True) -> float:
    """Heat ``Q = beta^{-1} S(D_t | d_fermi)``, cross-checked against the energy increment.

    ``d_fermi`` must be the Fermi symbol of ``h`` at ``beta``; its log-odds
    ``-beta h`` enter the relative entropy directly.

    Raises
    ------
    NumericInconsistencyError
        If ``|Q - S| > 1e-8 (1 + |Q|)`` with ``S`` the internal energy increment.
    """
    if not beta > 0:
        raise InvalidArgumentError("inverse temperature must be positive")
    Q = quasifree_relative_entropy(D_t, d_fermi, log_odds2=-beta * np.asarray(h)) / beta
    if check:
        S = internal_energy_increment(D_t, d_fermi, h)
        if abs(Q - S) > 1e-8 * (1.0 + abs(Q)):
            raise NumericInconsistencyError(
                f"heat {Q!r} and internal energy increment {S!r} disagree (|diff|={abs(Q - S):.3e})")
    return Q


def restrict_symbol(D: np.ndarray, box: LatticeBox, subbox: LatticeBox) -> np.ndarray:
    """Symbol of the state restricted to ``subbox`` (principal submatrix)."""
    if D.shape != (box.n, box.n):
        raise InvalidArgumentError("symbol does not live on box")
    idx = box.embedding(subbox)
    return D[np.ix_(idx, idx)]


# ---------------------------------------------------------------------------
# Driven trajectories
# ---------------------------------------------------------------------------

TRAJECTORY_COLUMNS = ("t", "S", "P", "work", "Q_rel", "first_law_residual", "balance_residual")


@dataclass
class EnergyTrajectory:
    """Energy bookkeeping of a driven quasi-free state on a time grid."""

    t: np.ndarray
    S: np.ndarray
    P: np.ndarray
    work: np.ndarray
    Q_rel: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def first_law_residual(self) -> np.ndarray:
        return np.abs(self.Q_rel - self.S) / (1.0 + np.abs(self.Q_rel))

    @property
    def balance_residual(self) -> np.ndarray:
        return np.abs(self.S + self.P - self.work)

    def rows(self):
        cols = [self.t, self.S, self.P, self.work, self.Q_rel,
                self.first_law_residual, self.balance_residual]
        return [tuple(float(c[i]) for c in cols) for i in range(self.t.size)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for r in self.rows():
            w.writerow([repr(v) for v in r])
        return buf.getvalue()


def driven_trajectory(box: LatticeBox, h: np.ndarray, A: VectorPotentialSpec, beta: float,
                      t_end: float, step: float | None = None, every: int = 1,
                      keep_symbols: bool = False) -> EnergyTrajectory:
    """Evolve the Fermi symbol under the driven dynamics and record energies.

    The grid starts at ``A.t0`` (before which nothing happens) and uses the
    same uniform steps for the exponential-midpoint integrator and for the
    Simpson work integral.

    Parameters
    ----------
    box, h, A, beta
        System, field and inverse temperature.
    t_end : float
        Final time, ``t_end >= A.t0``.
    step : float, optional
        Maximal time step, default ``(t1 - t0) / 400``.
    every : int
        Record every ``every``-th grid point (the work integral always uses
        the full grid).
    keep_symbols : bool
        Store the recorded symbols in ``extras["D"]``.
    """
    if t_end < A.t0:
        raise InvalidArgumentError("t_end must not precede the switch-on time")
    step = default_step(A) if step is None else step
    grid = uniform_grid(A.t0, t_end, step)
    cpl = field_coupling(box, A)
    d = fermi_symbol(h, beta)
    D = d.astype(complex)
    m = grid.size
    work_f = np.zeros(m)
    S = np.zeros(m)
    P = np.zeros(m)
    Q = np.zeros(m)
    symbols = []
    steps = midpoint_steps(box, h, A, grid)
    for k in range(m):
        if k > 0:
            E = next(steps)
            if cpl.coef.size:  # without a field the Fermi state is stationary
                D = E @ D @ E.conj().T
        tk = grid[k]
        if A.t0 < tk < A.t1 and cpl.coef.size:
            work_f[k] = potential_energy_increment(D, cpl.dw(tk))
        if k % every == 0 or k == m - 1:
            S[k] = internal_energy_increment(D, d, h)
            P[k] = potential_energy_increment(D, cpl.w(tk)) if cpl.coef.size else 0.0
            Q[k] = heat_production(D, d, h, beta)
            if keep_symbols:
                symbols.append(D.copy())
    W = work_integral(grid, work_f)
    keep = np.array([k % every == 0 or k == m - 1 for k in range(m)])
    traj = EnergyTrajectory(grid[keep], S[keep], P[keep], W[keep], Q[keep])
    if keep_symbols:
        traj.extras["D"] = symbols
    traj.extras["steps"] = m - 1
    return traj
