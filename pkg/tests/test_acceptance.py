"""The nine acceptance criteria at their stated tolerances and runtime budgets.

Each test prints a single PASS/FAIL line (also repeated in the session summary).
Reference values come from closed forms or from mpmath evaluations that share
no code with the package.
"""

import math
import time

import mpmath as mp
import numpy as np

from kshydro.core import (
    VelocityGrid,
    collision_Q_direct,
    collision_Q_factored,
    gaussian_moments,
    von_mises_gaussian,
)
from kshydro.experiments import (
    eps_sweep,
    fitted_slope,
    gci_errors,
    gci_pairings,
    hydro_validate,
    particle_vs_kinetic,
    random_anchored_u,
)
from kshydro.hardy import asymptotic_tail, hardy_ratio, muckenhoupt_BL, reduced_product
from kshydro.particles import ParticleEnsemble, pairwise_sync_force

# B_L(0, 0) from the mpmath oracle below at 30 digits, frozen
BL_ORIGIN = 0.47881289503772


def mp_muckenhoupt(d, V):
    """Nested quadrature of (int_r^inf M)(int_d^r 1/M), maximised over r."""
    with mp.workdps(30):
        d, V = mp.mpf(d), mp.mpf(V)
        M = lambda w: mp.exp(-(w - V) ** 2 / 2) / mp.sqrt(2 * mp.pi)
        tail = lambda r: mp.quad(M, [r, r + 4, mp.inf])
        inner = lambda r: mp.quad(lambda w: 1 / M(w), [d, r])
        prod = lambda r: tail(r) * inner(r)
        r0 = max((d + mp.mpf(k) / 4 for k in range(1, 33)), key=prod)
        # stationary point: tail(r) = M(r)^2 inner(r)
        r = mp.findroot(lambda r: tail(r) - M(r) ** 2 * inner(r), r0)
        return float(prod(r))


def mp_gauss_tail(a):
    with mp.workdps(30):
        return float(mp.quad(lambda x: mp.exp(-x * x), [a, a + 4, mp.inf]))


def test_c1_gaussian_moments(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for V in (-2.0, 0.0, 0.5, 2.5, 7.0):
        got = gaussian_moments(V, VelocityGrid(V - 10, V + 10, 512))
        worst = max(worst, float(np.max(np.abs(np.array(got) - [1.0, 0.0, V, 1.0]))))
    rt = time.perf_counter() - t0
    ok = worst <= 1e-8 and rt < 1.0
    assert verdict(1, "Gaussian moments", ok, f"max deviation {worst:.2e} <= 1e-8", rt)


def test_c2_collision_operator(verdict):
    t0 = time.perf_counter()
    V = 0.4
    disc, resid, hs = [], [], []
    for n in (64, 128, 256, 512):
        g = VelocityGrid.centered(V, n)
        x = g.nodes - V
        f = von_mises_gaussian(g.nodes, V) * (1 + 0.3 * np.sin(x) + 0.1 * x**2)
        disc.append(np.max(np.abs(collision_Q_direct(f, V, g) - collision_Q_factored(f, V, g))))
        resid.append(np.max(np.abs(collision_Q_direct(von_mises_gaussian(g.nodes, V), V, g))))
        hs.append(g.spacing)
    s_disc, s_res = fitted_slope(hs, disc), fitted_slope(hs, resid)
    rt = time.perf_counter() - t0
    ok = 1.7 <= s_disc <= 2.3 and 1.7 <= s_res <= 2.3 and rt < 10
    assert verdict(2, "collision operator", ok,
                   f"slopes {s_disc:.3f} (equivalence), {s_res:.3f} (annihilation) in [1.7, 2.3]", rt)


def test_c3_gci_reference(verdict):
    t0 = time.perf_counter()
    sols, errs = gci_errors(0.4, (64, 128, 256, 512))
    slope = fitted_slope([s.grid.spacing for s in sols], errs)
    cres = max(s.constraint_residual for s in sols)
    # independent check of the interior error against the closed form w - V
    w = sols[2].grid.nodes
    inner = np.abs(w - 0.4) <= 3
    direct = float(np.max(np.abs(sols[2].chi - (w - 0.4))[inner]))
    rt = time.perf_counter() - t0
    ok = direct <= 1e-3 and 1.7 <= slope <= 2.3 and cres <= 1e-10 and rt < 5
    assert verdict(3, "GCI solve", ok,
                   f"sup error {direct:.3e} <= 1e-3, slope {slope:.3f}, constraint {cres:.1e}", rt)


def test_c4_gci_invariance(verdict):
    t0 = time.perf_counter()
    table = gci_pairings(V=0.4, n_fields=10, resolutions=(64, 128, 256, 512), seed=2026)
    worst = float(table[:, 2].max())
    decreasing = bool(np.all(np.diff(table, axis=1) < 0))
    rt = time.perf_counter() - t0
    ok = worst <= 1e-4 and decreasing and rt < 30
    assert verdict(4, "GCI invariance", ok,
                   f"worst pairing at n_w=256 {worst:.2e} <= 1e-4, decreasing={decreasing}", rt)


def test_c5_hardy_muckenhoupt(verdict):
    t0 = time.perf_counter()
    rel = 0.0
    for d, V in ((0.0, 0.0), (0.8, 0.3)):
        ref = mp_muckenhoupt(d, V)
        rel = max(rel, abs(muckenhoupt_BL(d, V).B_L - ref) / ref)
    frozen = abs(muckenhoupt_BL(0.0, 0.0).B_L - BL_ORIGIN) / BL_ORIGIN

    dev = 0.0
    for off in np.arange(6.0, 12.5, 0.5):
        a = off / math.sqrt(2)
        dev = max(dev, abs(reduced_product(off, 0.0, 0.0) * 4 * a * a - 1.0))

    rng = np.random.default_rng(2026)
    grid = VelocityGrid.centered(0.0, 512)
    ratios = []
    for _ in range(20):
        u, d = random_anchored_u(rng, grid, 0.0)
        ratios.append(hardy_ratio(u, 0.0, d, grid) / muckenhoupt_BL(d, 0.0).bracket_hi)
    rt = time.perf_counter() - t0
    ok = rel <= 1e-6 and frozen <= 1e-12 and dev <= 0.05 and max(ratios) <= 1.05 and rt < 30
    assert verdict(5, "Hardy/Muckenhoupt", ok,
                   f"oracle rel {rel:.1e} <= 1e-6, large-r dev {dev:.3f} <= 0.05, "
                   f"max ratio/bracket_hi {max(ratios):.3f} <= 1.05", rt)


def test_c6_asymptotic_series(verdict):
    refs = {a: mp_gauss_tail(a) for a in np.linspace(1.5, 6.0, 20)}
    t0 = time.perf_counter()
    worst = 0.0
    for a, ref in refs.items():
        val, bound = asymptotic_tail(float(a))
        # a few ulps of slack for the double-precision sum itself
        worst = max(worst, abs(val - ref) / (bound + 4 * np.spacing(ref)))
    rt = time.perf_counter() - t0
    ok = worst <= 1.0 and rt < 1.0
    assert verdict(6, "asymptotic series", ok, f"max |error|/bound {worst:.3f} <= 1", rt)


def test_c7_hydro(verdict):
    t0 = time.perf_counter()
    out = hydro_validate()
    rt = time.perf_counter() - t0
    checks = {c.name: c for c in out.checks}
    ok = out.passed and rt < 30
    detail = (f"slope {checks['advection_l1_slope'].value:.3f}, "
              f"drift {checks['mass_drift_per_step'].value:.1e}, "
              f"stationary {checks['uniform_stationary'].value:.1e}, "
              f"momentum residual decreasing={checks['momentum_residual_decreasing'].passed}")
    assert verdict(7, "hydrodynamic solver", ok, detail, rt)


def test_c8_multiscale_limit(verdict):
    t0 = time.perf_counter()
    out = eps_sweep(epsilons=(0.2, 0.1, 0.05, 0.025), n_theta=64, n_w=64, n_nu=8, t_end=0.5)
    rt = time.perf_counter() - t0
    table = out.tables["eps_sweep"]
    ok = 0.7 <= table["slope"] <= 1.3 and rt < 600
    errs = ", ".join(f"{e:.2e}" for e in table["error"])
    assert verdict(8, "multiscale limit", ok, f"slope {table['slope']:.3f} in [0.7, 1.3]; errors {errs}", rt)


def test_c9_particles(verdict):
    t0 = time.perf_counter()
    out = particle_vs_kinetic(N=100_000)
    l1 = next(c.value for c in out.checks if c.name == "w_marginal_l1")
    # second route for the force: plain double loop
    rng = np.random.default_rng(9)
    theta = rng.uniform(0, 2 * math.pi, 50)
    loop = [math.fsum(math.sin(tj - ti) for tj in theta) / 50 for ti in theta]
    e = ParticleEnsemble(theta, np.zeros(50), np.zeros(50))
    gap = float(np.max(np.abs(pairwise_sync_force(e, 1.0) - loop)))
    rt = time.perf_counter() - t0
    ok = l1 <= 0.03 and gap <= 1e-12 and out.passed and rt < 120
    assert verdict(9, "particle/kinetic", ok, f"L1 {l1:.4f} <= 0.03, force gap {gap:.1e} <= 1e-12", rt)
