import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kshydro import hydro as hy
from kshydro.core import FrequencyQuadrature, PhaseGrid
from kshydro.experiments import advection_errors, fitted_slope, momentum_residual_errors
from kshydro.kinetic import CFLError

TWO_PI = 2 * math.pi


def random_state(seed, n_nu=3, n_theta=32, K=1.0):
    rng = np.random.default_rng(seed)
    freq = FrequencyQuadrature.gauss_hermite(0.0, 0.5, n_nu)
    P = (1 + 0.8 * rng.uniform(-1, 1, (n_nu, n_theta))) / TWO_PI
    return hy.HydroState(P, PhaseGrid(n_theta), freq, K)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        hy.HydroState(np.ones((2, 8)), PhaseGrid(8), FrequencyQuadrature.point(), 0.0)


@pytest.mark.parametrize("K", [0.0, 0.5, 2.0])
def test_coupling_fields_two_frequencies(K):
    freq = FrequencyQuadrature(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    P_nu = np.array([[0.1, 0.3], [0.3, 0.1]])
    c = hy.coupling_fields(hy.HydroState(P_nu, PhaseGrid(2), freq, K))
    assert np.allclose(c.P, [0.2, 0.2])
    assert np.allclose(c.Y, [0.5, -0.5])
    assert np.allclose(c.V, [[-1 + 0.2 * K] * 2, [1 + 0.2 * K] * 2])
    assert not c.vacuum.any()


def test_symmetric_frequencies_have_zero_mean_velocity():
    freq = FrequencyQuadrature.gauss_hermite(0.0, 0.7, 4)
    rng = np.random.default_rng(5)
    half = rng.uniform(0.05, 0.3, (2, 16))
    s = hy.HydroState(np.vstack([half, half[::-1]]), PhaseGrid(16), freq, 1.0)
    assert np.max(np.abs(s.Y)) < 1e-15
    assert s.pt_constant == pytest.approx(0.0, abs=1e-15)


def test_single_node_velocity_and_accessors():
    s = hy.HydroState(np.full((1, 8), 0.2), PhaseGrid(8), FrequencyQuadrature.point(0.3), 2.0)
    assert np.allclose(s.Y, 0.3) and np.allclose(s.u, 0.4) and np.allclose(s.V, 0.7)
    assert s.pt_constant == pytest.approx(0.06)


def test_uniform_coupling_fields():
    freq = FrequencyQuadrature.gauss_hermite(0.0, 0.5, 3)
    s = hy.HydroState(np.full((3, 8), 1 / TWO_PI), PhaseGrid(8), freq, 1.5)
    assert np.allclose(s.P, 1 / TWO_PI)
    assert np.allclose(s.V, freq.nodes[:, None] + 1.5 / TWO_PI)


def test_vacuum_cells_flagged():
    freq = FrequencyQuadrature.point(0.7)
    c = hy.coupling_fields(hy.HydroState(np.array([[0.0, 0.2]]), PhaseGrid(2), freq, 1.0))
    assert c.vacuum.tolist() == [True, False]
    assert c.Y[0] == 0.0 and c.Y[1] == pytest.approx(0.7)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_mean_flux_identity(seed, K):
    # P Y + K P^2 equals the quadrature of V P_nu over frequencies
    s = random_state(seed, K=K)
    c = hy.coupling_fields(s)
    lhs = c.P * c.Y + K * c.P**2
    rhs = s.freq.weights @ (c.V * s.P_nu)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_summed_update_is_conservative_total_density(seed, K):
    # the frequency-summed update moves P with a flux whose central part is P (Y + K P)
    s = random_state(seed, K=K)
    dt = hy.max_stable_dt(s, 0.9)
    c = hy.coupling_fields(s)
    G = s.freq.weights @ hy.llf_flux(s.P_nu, c.V)
    P1 = hy.step_fv(s, dt).P
    assert np.max(np.abs(P1 - (c.P - dt / s.phase.spacing * (G - np.roll(G, 1))))) <= 1e-12
    flux = c.P * (c.Y + K * c.P)
    central = 0.5 * (flux + np.roll(flux, -1))
    jump = s.freq.weights @ (np.maximum(np.abs(c.V), np.abs(np.roll(c.V, -1, axis=1)))
                             * (np.roll(s.P_nu, -1, axis=1) - s.P_nu))
    assert np.max(np.abs(G - (central - 0.5 * jump))) <= 1e-12


def test_advection_first_order():
    freq = FrequencyQuadrature.gauss_hermite(0.0, 0.5, 4)
    hs, errs = advection_errors(freq, (64, 128, 256, 512))
    assert np.all(np.diff(errs) < 0)
    assert 0.8 <= fitted_slope(hs, errs) <= 1.2


def test_single_frequency_exact_shift():
    # unit CFL with a constant speed moves every cell one place
    freq = FrequencyQuadrature.point(1.0)
    P = np.arange(16, dtype=float)[None, :] + 1.0
    s = hy.HydroState(P, PhaseGrid(16), freq, 0.0)
    s1 = hy.step_fv(s, s.phase.spacing, cfl=1.0)
    assert np.allclose(s1.P_nu, np.roll(P, 1, axis=1), atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_mass_drift(seed):
    s = random_state(seed, n_nu=4, n_theta=64)
    for _ in range(200):
        m0 = s.mass_per_nu()
        s = hy.step_fv(s, hy.max_stable_dt(s, 0.9))
        assert np.max(np.abs(s.mass_per_nu() - m0)) <= 1e-13


@pytest.mark.parametrize("K", [0.0, 1.0, 3.0])
def test_uniform_stationary(K):
    freq = FrequencyQuadrature.gauss_hermite(0.0, 0.5, 4)
    u = hy.HydroState(np.full((4, 64), 1 / TWO_PI), PhaseGrid(64), freq, K)
    s = hy.advance(u, 5.0, cfl=0.9)
    assert np.max(np.abs(s.P_nu - u.P_nu)) <= 1e-13


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 1.0))
def test_positivity_under_cfl(seed, cfl):
    rng = np.random.default_rng(seed)
    s = random_state(seed)
    s = s.replace(s.P_nu * (rng.uniform(size=s.P_nu.shape) < 0.7), 0.0)
    for _ in range(20):
        s = hy.step_fv(s, hy.max_stable_dt(s, cfl))
        assert s.P_nu.min() >= -1e-15


def test_cfl_violation():
    s = random_state(0)
    with pytest.raises(CFLError):
        hy.step_fv(s, 1.01 * hy.max_stable_dt(s, 1.0))


def test_advance_hits_end_time():
    s = hy.advance(random_state(1), 0.37)
    assert s.t == pytest.approx(0.37, abs=1e-14)


# --------------------------------------------------------------------------
# residuals


def test_residuals_vanish_on_uniform():
    freq = FrequencyQuadrature.gauss_hermite(0.0, 0.5, 3)
    u = hy.HydroState(np.full((3, 32), 1 / TWO_PI), PhaseGrid(32), freq, 1.0)
    u1 = hy.step_fv(u, 0.01)
    for fn in (hy.residual_hl2, hy.residual_momentum):
        r = fn(u, u1, 0.01)
        assert r.sup == 0.0 and r.excluded == 0 and r.py_variation < 1e-16


def test_hl2_single_frequency_is_pressure_gradient():
    ph = PhaseGrid(64)
    freq = FrequencyQuadrature.point(0.8)
    P = ((1 + 0.5 * np.cos(ph.nodes)) / TWO_PI)[None, :]
    s0 = hy.HydroState(P, ph, freq, 0.0)
    dt = hy.max_stable_dt(s0, 0.5)
    r = hy.residual_hl2(s0, hy.step_fv(s0, dt), dt)
    dP = (np.roll(P[0], -1) - np.roll(P[0], 1)) / (2 * ph.spacing)
    assert np.allclose(r.values, dP, atol=1e-15)
    # and the centred difference is second-order close to the derivative
    assert np.max(np.abs(dP + 0.5 * np.sin(ph.nodes) / TWO_PI)) < ph.spacing**2


def test_hl2_excludes_vacuum():
    ph = PhaseGrid(8)
    P = np.full((1, 8), 0.1)
    P[0, 3] = 0.0
    s0 = hy.HydroState(P, ph, FrequencyQuadrature.point(0.2), 1.0)
    r = hy.residual_hl2(s0, s0, 0.1)
    assert r.excluded == 1 and r.values[3] == 0.0


def test_momentum_residual_converges_to_continuous_value():
    freq = FrequencyQuadrature.gauss_hermite(0.0, 0.5, 4)
    errs = momentum_residual_errors(freq, 1.0, (64, 128, 256, 512))
    assert np.all(np.diff(errs) < 0)
    assert fitted_slope([1 / 64, 1 / 128, 1 / 256, 1 / 512], errs) > 0.8


def test_momentum_residual_K0_constant_velocity():
    # single frequency, K = 0: (1/2)(nu dP/dt) + dP/dtheta with dP/dt from the scheme
    ph = PhaseGrid(128)
    nu = 0.6
    P = ((1 + 0.5 * np.cos(ph.nodes)) / TWO_PI)[None, :]
    s0 = hy.HydroState(P, ph, FrequencyQuadrature.point(nu), 0.0)
    dt = hy.max_stable_dt(s0, 0.5)
    s1 = hy.step_fv(s0, dt)
    r = hy.residual_momentum(s0, s1, dt)
    dP = (np.roll(P[0], -1) - np.roll(P[0], 1)) / (2 * ph.spacing)
    expect = 0.5 * nu * (s1.P_nu[0] - P[0]) / dt + dP
    assert np.allclose(r.values, expect, atol=1e-13)
    continuous = (1 - 0.5 * nu**2) * (-0.5 * np.sin(ph.nodes) / TWO_PI)
    assert np.max(np.abs(r.values - continuous)) < 2 * ph.spacing


# --------------------------------------------------------------------------
# export


def test_snapshot_csv_and_manifest(tmp_path):
    s = random_state(2, n_nu=2, n_theta=8)
    hy.write_snapshots_csv(tmp_path / "snap.csv", [s, hy.step_fv(s, 0.01)])
    lines = (tmp_path / "snap.csv").read_text().splitlines()
    assert lines[0] == "t,theta_index,P,Y,P_nu_0,P_nu_1"
    assert len(lines) == 1 + 16
    row = [float(v) for v in lines[1].split(",")]
    assert row[4] == s.P_nu[0, 0]
    hy.write_manifest(tmp_path / "m.json", s, 0.9)
    assert '"cfl": 0.9' in (tmp_path / "m.json").read_text()
