"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from heatprod import fock
from heatprod.experiments import runner
from heatprod.experiments.config import ScenarioConfig
from heatprod.lattice import VectorPotentialSpec, build_box, field_coupling, hamiltonian, sample_disorder
from heatprod.onebody import (correlation_decay_profile, driven_propagator, dyson_phillips_propagator,
                              fermi_symbol, free_propagator, uniform_grid)
from heatprod.quasifree import bilinear, driven_trajectory, work_integral
from heatprod.trees import (check_tree_decay_bound, contraction_maps, enumerate_trees,
                            expand_multicommutator, heat_series_sum, tree_decay_constant)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        return ok

    return emit


def system(L, seed, lam, d=1):
    box = build_box(d, L)
    return box, hamiltonian(box, sample_disorder(box, seed), lam)


def test_first_law(report):
    start = time.perf_counter()
    A = VectorPotentialSpec(0.2, 4.0, 0.0, 4.0)
    grid = uniform_grid(0.0, 6.0, 4.0 / 400)
    rec = range(0, grid.size, 50)
    worst_fock = worst_qf = 0.0
    for lam in (0.0, 0.5, 1.0):
        for beta in (0.5, 2.0):
            for seed in range(10):
                box, h = system(2, seed, lam)  # 5 sites
                H = fock.second_quantize(h)
                g = fock.gibbs_state(H, beta)
                Vs = fock.evolve_many_body_path(box, H, A, grid)
                for k in rec:
                    rho = Vs[k] @ g @ Vs[k].conj().T
                    dE = np.trace((rho - g) @ H).real
                    Q = fock.relative_entropy_fock(rho, g) / beta
                    worst_fock = max(worst_fock, abs(Q - dE) / (1 + abs(dE)))
                tr = driven_trajectory(box, h, A, beta, 6.0, every=50)
                worst_qf = max(worst_qf, tr.first_law_residual.max())
    elapsed = time.perf_counter() - start
    ok = worst_fock <= 1e-9 and worst_qf <= 1e-8 and elapsed <= 60
    assert report(1, "first law", ok, f"fock {worst_fock:.1e} (<=1e-9), quasi-free {worst_qf:.1e} (<=1e-8), "
                  f"{elapsed:.0f}s (<=60s)")


def test_oracle_equivalence(report):
    start = time.perf_counter()
    worst = {}
    for L, lam in ((1, 0.5), (2, 0.0), (2, 1.0)):  # 3 and 5 sites
        cfg = ScenarioConfig.from_dict({"L": [L], "lambda": lam, "beta": 1.0, "seeds": [0, 1, 2],
                                        "eta": [0.2], "l": [2], "potential": {"t0": 0, "t1": 4},
                                        "horizon": 6, "record_every": 20})
        _, man = runner.crosscheck_oracle(cfg)
        for c in man.checks:
            worst[c.name] = max(worst.get(c.name, 0.0), c.residual)
    elapsed = time.perf_counter() - start
    keys = ("oracle_S", "oracle_P", "oracle_work", "oracle_Q")
    ok = all(worst[k] <= 1e-8 for k in keys) and elapsed <= 120
    detail = ", ".join(f"{k[7:]} {worst[k]:.1e}" for k in keys)
    assert report(2, "oracle equivalence", ok, f"{detail} (<=1e-8), {elapsed:.0f}s (<=120s)")


def test_energy_balance(report):
    box, h = system(32, 0, 0.5)
    A = VectorPotentialSpec(0.2, 4.0, 0.0, 10.0)
    T = A.t1 - A.t0
    r1 = driven_trajectory(box, h, A, 1.0, A.t1, T / 400).balance_residual.max()
    r2 = driven_trajectory(box, h, A, 1.0, A.t1, T / 800).balance_residual.max()
    ok = r1 <= 1e-6 and r1 / r2 >= 3.5
    assert report(3, "energy balance", ok, f"residual {r1:.2e} (<=1e-6), halving ratio {r1 / r2:.2f} (>=3.5)")


def test_positivity_and_plateau(report):
    rng = np.random.default_rng(2024)
    worst_S = 0.0
    worst_plateau = 0.0
    for _ in range(50):
        lam, beta = rng.uniform(0, 2), rng.uniform(0.3, 3)
        eta, l = rng.uniform(-0.5, 0.5), rng.uniform(1, 4)
        box, h = system(8, int(rng.integers(2**31)), lam)
        A = VectorPotentialSpec(eta, l, 0.0, 4.0)
        tr = driven_trajectory(box, h, A, beta, A.t1 + 20)
        worst_S = min(worst_S, tr.S.min())
        after = tr.t >= A.t1
        worst_plateau = max(worst_plateau, np.max(np.abs(tr.Q_rel[after] - tr.Q_rel[after][0])))
    ok = worst_S >= -1e-10 and worst_plateau <= 1e-8
    assert report(4, "positivity and plateau", ok,
                  f"min S {worst_S:.1e} (>=-1e-10), max |Q(t)-Q(t1)| {worst_plateau:.1e} (<=1e-8)")


def test_tree_expansion(report):
    rng = np.random.default_rng(7)
    box, h = system(2, 1, 0.5)
    n = box.n
    worst = 0.0
    for N in (2, 3, 4):
        for _ in range(5):
            B = []
            for _ in range(N):
                U = free_propagator(h, -rng.uniform(0, 3))
                x, y = rng.integers(n, size=2)
                B.append(bilinear(U[:, x], U[:, y]))
            direct = fock.multicommutator([fock.monomial_operator(b, n) for b in B])
            rec = sum(t.sign * t.scalar * fock.monomial_operator(t.reduced_factors(), n)
                      for t in expand_multicommutator(B))
            worst = max(worst, np.max(np.abs(rec - direct)))
    counts = all(len(enumerate_trees(N)) == math.factorial(N - 1) for N in range(2, 9))
    maps = all(len(list(contraction_maps(T, (2,) * N))) == 4 ** (N - 1)
               for N in (2, 3, 4) for T in enumerate_trees(N))
    ok = worst <= 1e-10 and counts and maps
    assert report(5, "tree expansion", ok, f"max error {worst:.1e} (<=1e-10), tree counts {counts}, "
                  f"contraction counts {maps}")


def test_series_consistency(report):
    worst = 0.0
    worst_rate = 0.0
    for lam in (0.0, 0.5):
        for seed in range(6):
            box, h = system(16, seed, lam)
            A = VectorPotentialSpec(0.05, 2.0, 0.0, 4.0)
            d = fermi_symbol(h, 1.0)
            Q = driven_trajectory(box, h, A, 1.0, A.t1, 4.0 / 800, every=10**6).Q_rel[-1]
            rep = heat_series_sum(6, 800, h, d, A, box)
            worst = max(worst, abs(rep.orders[:3].sum() - Q))
            o = np.abs(rep.orders)
            # geometric decay: |order k| <= |order 2| r^(k-2) with r < 1
            rate = max((o[k - 1] / o[1]) ** (1.0 / (k - 2)) for k in range(3, 7))
            worst_rate = max(worst_rate, rate)
    ok = worst <= 1e-6 and worst_rate < 1
    assert report(6, "series consistency", ok, f"K=3 error {worst:.2e} (<=1e-6), decay rate {worst_rate:.3f} (<1)")


def test_dyson_order(report):
    box, h = system(4, 0, 0.5)
    etas = np.array([0.02, 0.04, 0.08, 0.16, 0.32])
    M = 400
    res = {1: [], 2: []}
    for eta in etas:
        A = VectorPotentialSpec(eta, 2.0, 0.0, 4.0)
        exact = driven_propagator(box, h, A, 0.0, 4.0, 4.0 / M)
        for K in (1, 2):
            res[K].append(np.linalg.norm(dyson_phillips_propagator(box, h, A, 0.0, 4.0, K, grid=M) - exact, 2))
    slopes = {K: np.polyfit(np.log(etas), np.log(res[K]), 1)[0] for K in (1, 2)}
    ok = all(abs(slopes[K] - (K + 1)) <= 0.2 for K in (1, 2))
    assert report(7, "Dyson-Phillips order", ok, f"slopes K=1 {slopes[1]:.3f}, K=2 {slopes[2]:.3f} (K+1 +- 0.2)")


def test_scaling_law(report):
    start = time.perf_counter()
    cfg = ScenarioConfig.from_dict({"L": [8], "lambda": 2.0, "seeds": [0, 1, 2, 3],
                                    "eta": [0.025, 0.05, 0.1, 0.2], "l": [4, 8, 16],
                                    "potential": {"t0": 0, "t1": 4}, "horizon": 4})
    _, man = runner.scaling_sweep(cfg)
    checks = {c.name: c for c in man.checks}
    r = man.notes["ratios"][repr(0.05)]
    spread = max(r) / min(r) - 1
    elapsed = time.perf_counter() - start
    ok = checks["c0_vanishes"].passed and checks["c1_vanishes"].passed and spread < 0.25 and elapsed <= 600
    fits = man.notes["fits"]
    c0 = max(abs(f["c0"]) for f in fits.values())
    c1 = max(abs(f["c1"]) for f in fits.values())
    assert report(8, "scaling law", ok, f"|c0| {c0:.1e}, |c1| {c1:.1e} within fit error, "
                  f"Q/(eta^2 l) spread {spread:.1%} (<25%), {elapsed:.0f}s (<=600s)")


def test_thermodynamic_limit(report):
    cfg = ScenarioConfig.from_dict({"L": [8, 16, 32], "lambda": 0.5, "seeds": [0, 1], "eta": [0.2], "l": [4],
                                    "potential": {"t0": 0, "t1": 10}, "horizon": 10})
    rows, man = runner.thermolimit_sweep(cfg)
    checks = {c.name: c for c in man.checks}
    ok = checks["differences_strictly_decreasing"].passed
    diffs = [r["difference"] for r in rows if r["seed"] == 0]
    assert report(9, "thermodynamic limit", ok,
                  "differences " + ", ".join(f"{x:.1e}" for x in diffs) + " strictly decreasing")


def test_tree_decay_bound(report):
    eps, t0, t1 = 0.5, 0.0, 3.0
    times = np.linspace(t0, t1, 61)
    lams = (0.0, 0.5, 1.0)

    def corr_D(lam, seed):
        box, h = system(10, seed, lam)
        return correlation_decay_profile(h, times, eps, box).D

    D_fit = 1.1 * max(corr_D(lam, s) for lam in lams for s in range(30))
    held_corr = max(corr_D(lam, s) for lam in lams for s in range(30, 60))
    C = tree_decay_constant(D_fit, 1, eps)
    worst = 0.0
    rng = np.random.default_rng(11)
    for lam in lams:
        for seed in range(30, 60):
            box, h = system(10, seed, lam)
            d = fermi_symbol(h, 1.0)
            for N in (2, 3, 4):
                rep = check_tree_decay_bound(d, h, eps, t0, t1, 2, box, N=N, rng=rng)
                worst = max(worst, np.max(rep.ratios) / C ** (N - 1))
    ok = held_corr <= D_fit and worst <= 1
    assert report(10, "tree-decay bound", ok, f"fitted D {D_fit:.3f}, held-out correlation max {held_corr:.3f}, "
                  f"held-out multi-commutator max ratio {worst:.2e} (<=1)")
