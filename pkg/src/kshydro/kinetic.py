"""Split-step solver for eps*alpha*(d_t f + w d_theta f) = Q(f).

Phase transport is explicit and conservative; the stiff collision substep is
backward Euler on the factored flux form, one tridiagonal system per
(nu, theta) column.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    KineticField,
    ScaledParams,
    check_coverage,
    effective_velocity,
    factored_weights,
    mean_flux_phi,
    nonlocal_J_eps,
)

COUPLING_MODES = ("local", "nonlocal")
COLLISION_SCHEMES = ("factored", "direct")
TRANSPORT_SCHEMES = ("upwind", "upwind3")


class CFLError(ValueError):
    pass


@dataclass(frozen=True)
class KineticConfig:
    cfl: float = 0.5
    coupling_mode: str = "local"
    collision_scheme: str = "factored"
    transport_scheme: str = "upwind"

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.coupling_mode not in COUPLING_MODES:
            raise ValueError(f"coupling_mode must be one of {COUPLING_MODES}")
        if self.collision_scheme not in COLLISION_SCHEMES:
            raise ValueError(f"collision_scheme must be one of {COLLISION_SCHEMES}")
        if self.transport_scheme not in TRANSPORT_SCHEMES:
            raise ValueError(f"transport_scheme must be one of {TRANSPORT_SCHEMES}")


@dataclass
class KineticState:
    field: KineticField
    t: float
    scaled: ScaledParams

    @property
    def K(self) -> float:
        return self.scaled.coupling


def max_stable_dt(state: KineticState, cfl: float) -> float:
    vel = state.field.velocity
    wmax = max(abs(vel.w_min), abs(vel.w_max))
    return cfl * state.field.phase.spacing / wmax


# --------------------------------------------------------------------------
# tridiagonal systems


def solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas algorithm batched over leading axes.

    ``lower[..., j]`` multiplies x[j] in row j+1 and ``upper[..., j]`` multiplies
    x[j+1] in row j, so both have length n-1. No pivoting: callers supply
    column diagonally dominant matrices.
    """
    n = diag.shape[-1]
    c = np.empty_like(diag)
    d = np.empty_like(rhs)
    c[..., 0] = upper[..., 0] / diag[..., 0]
    d[..., 0] = rhs[..., 0] / diag[..., 0]
    for j in range(1, n):
        denom = diag[..., j] - lower[..., j - 1] * c[..., j - 1]
        if j < n - 1:
            c[..., j] = upper[..., j] / denom
        d[..., j] = (rhs[..., j] - lower[..., j - 1] * d[..., j - 1]) / denom
    x = np.empty_like(rhs)
    x[..., -1] = d[..., -1]
    for j in range(n - 2, -1, -1):
        x[..., j] = d[..., j] - c[..., j] * x[..., j + 1]
    return x


def collision_matrix(V, grid, scheme: str = "factored"):
    """Tridiagonal bands (lower, diag, upper) of the discrete Q_V, batched over V.

    Both schemes write the face flux as ``cr * f[j+1] + cl * f[j]``.
    """
    dw = grid.spacing
    V = np.asarray(V, dtype=float)
    if scheme == "factored":
        a, b = factored_weights(V, grid)
        cr, cl = a / dw, -b / dw
    elif scheme == "direct":
        s = grid.faces - V[..., None]
        cr, cl = 0.5 * s + 1.0 / dw, 0.5 * s - 1.0 / dw
    else:
        raise ValueError(f"unknown collision scheme {scheme!r}")
    diag = np.zeros(V.shape + (grid.n_w,))
    diag[..., :-1] += cl / dw
    diag[..., 1:] -= cr / dw
    return -cl / dw, diag, cr / dw


# --------------------------------------------------------------------------
# substeps


def _upwind_flux(f, w, axis):
    wp = np.maximum(w, 0.0)
    wm = np.minimum(w, 0.0)
    return wp * f + wm * np.roll(f, -1, axis=axis)


def _upwind3_flux(f, w, axis):
    fm1 = np.roll(f, 1, axis=axis)
    fp1 = np.roll(f, -1, axis=axis)
    fp2 = np.roll(f, -2, axis=axis)
    right_going = (-fm1 + 5.0 * f + 2.0 * fp1) / 6.0
    left_going = (2.0 * f + 5.0 * fp1 - fp2) / 6.0
    return np.maximum(w, 0.0) * right_going + np.minimum(w, 0.0) * left_going


def _transport_rhs(f, w, dth, flux_fn):
    F = flux_fn(f, w, 1)
    return -(F - np.roll(F, 1, axis=1)) / dth


def transport_substep(state: KineticState, dt: float, cfl: float = 1.0,
                      scheme: str = "upwind") -> KineticState:
    """Advance d_t f + w d_theta f = 0 by dt with periodic conservative fluxes."""
    fld = state.field
    limit = max_stable_dt(state, cfl)
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"dt={dt:.4g} exceeds the CFL limit {limit:.4g}")
    w = fld.velocity.nodes[None, None, :]
    dth = fld.phase.spacing
    f = fld.values
    if scheme == "upwind":
        out = f + dt * _transport_rhs(f, w, dth, _upwind_flux)
    elif scheme == "upwind3":
        # SSP Runge-Kutta 3
        L = lambda g: _transport_rhs(g, w, dth, _upwind3_flux)
        f1 = f + dt * L(f)
        f2 = 0.75 * f + 0.25 * (f1 + dt * L(f1))
        out = f / 3.0 + 2.0 / 3.0 * (f2 + dt * L(f2))
    else:
        raise ValueError(f"unknown transport scheme {scheme!r}")
    return KineticState(fld.copy_with(out), state.t + dt, state.scaled)


def coupling_field(state: KineticState, mode: str = "local") -> np.ndarray:
    if mode == "local":
        return mean_flux_phi(state.field)
    if mode == "nonlocal":
        return nonlocal_J_eps(state.field, state.scaled.epsilon)
    raise ValueError(f"unknown coupling mode {mode!r}")


def collision_substep(state: KineticState, dt: float, V=None, scheme: str = "factored",
                      mode: str = "local") -> KineticState:
    """Backward Euler for d_tau f = Q(f) / (eps * alpha), column by column.

    ``V[q, i]`` defaults to nu_q + K * Phi[i] evaluated on the incoming state.
    """
    fld = state.field
    if V is None:
        V = effective_velocity(fld.freq.nodes[:, None], coupling_field(state, mode)[None, :], state.K)
    check_coverage(V, fld.velocity)
    tau = dt / (state.scaled.epsilon * state.scaled.alpha)
    lower, diag, upper = collision_matrix(V, fld.velocity, scheme)
    new = solve_tridiagonal(-tau * lower, 1.0 - tau * diag, -tau * upper, fld.values)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("collision solve produced non-finite values")
    return KineticState(fld.copy_with(new), state.t, state.scaled)


def step(state: KineticState, dt: float, cfg: KineticConfig) -> KineticState:
    """Strang step: transport(dt/2), collision(dt), transport(dt/2)."""
    s = transport_substep(state, 0.5 * dt, cfg.cfl, cfg.transport_scheme)
    s = collision_substep(s, dt, scheme=cfg.collision_scheme, mode=cfg.coupling_mode)
    s = transport_substep(s, 0.5 * dt, cfg.cfl, cfg.transport_scheme)
    return s


def advance(state: KineticState, t_end: float, cfg: KineticConfig, dt: float | None = None) -> KineticState:
    """Step to ``t_end`` with equal steps no larger than ``dt`` (CFL-limited by default)."""
    span = t_end - state.t
    if span <= 0:
        return state
    dt_max = 2.0 * max_stable_dt(state, cfg.cfl)
    if dt is not None:
        dt_max = min(dt_max, dt)
    n = int(math.ceil(span / dt_max - 1e-12))
    h = span / n
    for _ in range(n):
        state = step(state, h, cfg)
    return state


def moments(state: KineticState):
    """Per-nu density and flux on the phase grid."""
    fld = state.field
    dw = fld.velocity.spacing
    P = fld.values.sum(axis=2) * dw
    flux = (fld.values * fld.velocity.nodes).sum(axis=2) * dw
    return P, flux


# --------------------------------------------------------------------------
# export


def write_moments_csv(path, states) -> None:
    """CSV rows t, nu_index, theta_index, P_eps, flux_eps for each state."""
    rows = []
    for s in states:
        P, flux = moments(s)
        q, i = np.meshgrid(np.arange(P.shape[0]), np.arange(P.shape[1]), indexing="ij")
        rows.append(np.column_stack([np.full(P.size, s.t), q.ravel(), i.ravel(), P.ravel(), flux.ravel()]))
    data = np.vstack(rows)
    with open(path, "w") as fh:
        fh.write("t,nu_index,theta_index,P_eps,flux_eps\n")
        for r in data:
            fh.write(f"{r[0]:.17g},{int(r[1])},{int(r[2])},{r[3]:.17g},{r[4]:.17g}\n")


def dump_field(path, state: KineticState) -> None:
    """Raw little-endian float64 values in (nu, theta, w) row-major order plus a JSON header."""
    path = Path(path)
    fld = state.field
    fld.values.astype("<f8").tofile(path.with_suffix(".bin"))
    header = {
        "shape": list(fld.values.shape),
        "order": "row-major",
        "axes": ["nu", "theta", "w"],
        "dtype": "float64",
        "endianness": "little",
        "t": state.t,
        "phase": {"n_theta": fld.phase.n_theta},
        "velocity": {"w_min": fld.velocity.w_min, "w_max": fld.velocity.w_max, "n_w": fld.velocity.n_w},
        "freq": {"nodes": fld.freq.nodes.tolist(), "weights": fld.freq.weights.tolist()},
        "scaled": {"epsilon": state.scaled.epsilon, "alpha": state.scaled.alpha,
                   "coupling": state.scaled.coupling},
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=2))


def load_field(path):
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    values = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(header["shape"])
    return header, values
