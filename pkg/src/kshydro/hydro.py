"""Finite-volume solver for the per-frequency continuity equations

    d_t P_nu + d_theta(V P_nu) = 0,   V = nu + K P,   P = sum_q w_q P_nu,

with monitored residuals of the momentum balance and its conservative form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import FrequencyQuadrature, PhaseGrid
from .kinetic import CFLError


@dataclass
class HydroState:
    P_nu: np.ndarray
    phase: PhaseGrid
    freq: FrequencyQuadrature
    K: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        self.P_nu = np.asarray(self.P_nu, dtype=float)
        if self.P_nu.shape != (self.freq.n_nu, self.phase.n_theta):
            raise ValueError("P_nu shape does not match (n_nu, n_theta)")

    def mass_per_nu(self) -> np.ndarray:
        return self.P_nu.sum(axis=1) * self.phase.spacing

    def replace(self, P_nu, t) -> "HydroState":
        return HydroState(P_nu, self.phase, self.freq, self.K, t)

    @property
    def P(self) -> np.ndarray:
        return self.freq.weights @ self.P_nu

    @property
    def Y(self) -> np.ndarray:
        return coupling_fields(self).Y

    @property
    def u(self) -> np.ndarray:
        """Shift K P shared by every frequency row of V."""
        return self.K * self.P

    @property
    def V(self) -> np.ndarray:
        return coupling_fields(self).V

    @property
    def pt_constant(self) -> float:
        """Mean over theta of P Y; it is the whole of P Y when that product is flat."""
        return float(np.mean((self.freq.weights * self.freq.nodes) @ self.P_nu))


class CouplingFields(NamedTuple):
    P: np.ndarray
    Y: np.ndarray
    V: np.ndarray
    vacuum: np.ndarray


def coupling_fields(s: HydroState, vacuum_tol: float = 1e-14) -> CouplingFields:
    w, nu = s.freq.weights, s.freq.nodes
    P = w @ s.P_nu
    PY = (w * nu) @ s.P_nu
    vacuum = P < vacuum_tol
    Y = np.where(vacuum, 0.0, PY / np.where(vacuum, 1.0, P))
    V = nu[:, None] + s.K * P[None, :]
    return CouplingFields(P, Y, V, vacuum)


def max_stable_dt(s: HydroState, cfl: float = 1.0) -> float:
    V = coupling_fields(s).V
    vmax = np.max(np.abs(V))
    return np.inf if vmax == 0 else cfl * s.phase.spacing / vmax


def llf_flux(P_nu, V):
    """Local Lax-Friedrichs flux at face i+1/2 for each row."""
    Pr = np.roll(P_nu, -1, axis=-1)
    Vr = np.roll(V, -1, axis=-1)
    speed = np.maximum(np.abs(V), np.abs(Vr))
    return 0.5 * (V * P_nu + Vr * Pr) - 0.5 * speed * (Pr - P_nu)


def step_fv(s: HydroState, dt: float, cfl: float = 1.0) -> HydroState:
    V = coupling_fields(s).V
    vmax = np.max(np.abs(V))
    if dt * vmax > cfl * s.phase.spacing * (1 + 1e-12):
        raise CFLError(f"dt={dt:.4g} violates CFL {cfl} (max|V|={vmax:.4g})")
    F = llf_flux(s.P_nu, V)
    new = s.P_nu - dt / s.phase.spacing * (F - np.roll(F, 1, axis=-1))
    return s.replace(new, s.t + dt)


def advance(s: HydroState, t_end: float, cfl: float = 0.5, record=None) -> HydroState:
    """Step to ``t_end``; each step size is chosen from the current CFL limit."""
    while s.t < t_end - 1e-14:
        dt = min(max_stable_dt(s, cfl), t_end - s.t)
        s = step_fv(s, dt, cfl=1.0)
        if record is not None:
            record(s)
    return s


# --------------------------------------------------------------------------
# residual diagnostics


class Residual(NamedTuple):
    values: np.ndarray
    sup: float
    l1: float
    excluded: int
    py_variation: float
    pt_constant: float  # mean of P*Y over the cells; constant in theta on the (pt) branch


def _ddtheta(a, dth):
    return (np.roll(a, -1, axis=-1) - np.roll(a, 1, axis=-1)) / (2 * dth)


def _norms(r, mask, dth, PY):
    kept = np.where(mask, 0.0, r)
    return Residual(kept, float(np.max(np.abs(kept))), float(np.sum(np.abs(kept)) * dth),
                    int(mask.sum()), float(PY.max() - PY.min()), float(PY.mean()))


def residual_hl2(s0: HydroState, s1: HydroState, dt: float) -> Residual:
    """P d_t V + P (Y + K P) d_theta V + d_theta P, forward in time, centred in theta.

    Vacuum cells are excluded and counted.
    """
    c0, c1 = coupling_fields(s0), coupling_fields(s1)
    dth = s0.phase.spacing
    # V depends on nu only through an additive constant, so one row suffices
    dVdt = (c1.V[0] - c0.V[0]) / dt
    dVdth = _ddtheta(c0.V[0], dth)
    P, Y = c0.P, c0.Y
    r = P * dVdt + P * (Y + s0.K * P) * dVdth + _ddtheta(P, dth)
    return _norms(r, c0.vacuum, dth, P * Y)


def residual_momentum(s0: HydroState, s1: HydroState, dt: float) -> Residual:
    """(1/2) d_t(PY + K P^2) + (1/2) d_theta(K Y P^2 + (2/3) K^2 P^3 + 2 P)."""
    c0, c1 = coupling_fields(s0), coupling_fields(s1)
    K = s0.K
    dth = s0.phase.spacing
    density = lambda c: c.P * c.Y + K * c.P**2
    P, Y = c0.P, c0.Y
    flux = K * Y * P**2 + (2.0 / 3.0) * K**2 * P**3 + 2.0 * P
    r = 0.5 * (density(c1) - density(c0)) / dt + 0.5 * _ddtheta(flux, dth)
    return _norms(r, np.zeros_like(P, dtype=bool), dth, P * Y)


# --------------------------------------------------------------------------
# export


def write_snapshots_csv(path, states) -> None:
    """Rows t, theta_index, P, Y, P_nu_0 ... P_nu_{n-1}."""
    n_nu = states[0].freq.n_nu
    cols = ["t", "theta_index", "P", "Y"] + [f"P_nu_{q}" for q in range(n_nu)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for s in states:
            c = coupling_fields(s)
            for i in range(s.phase.n_theta):
                vals = [c.P[i], c.Y[i], *s.P_nu[:, i]]
                fh.write(f"{s.t:.17g},{i}," + ",".join(f"{v:.17g}" for v in vals) + "\n")


def write_manifest(path, s: HydroState, cfl: float) -> None:
    Path(path).write_text(json.dumps({
        "K": s.K,
        "cfl": cfl,
        "phase": {"n_theta": s.phase.n_theta},
        "freq": {"nodes": s.freq.nodes.tolist(), "weights": s.freq.weights.tolist()},
    }, indent=2))
