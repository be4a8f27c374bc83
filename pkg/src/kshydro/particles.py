"""Euler-Maruyama simulation of N inertial phase oscillators with additive noise.

    d theta_i = w_i dt
    m dw_i    = (-w_i + nu_i + (K/N) sum_j sin(theta_j - theta_i)) dt + sqrt(2 sigma) dW_i
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    TWO_PI,
    FrequencyQuadrature,
    KineticField,
    PhaseGrid,
    PhysicalParams,
    VelocityGrid,
    von_mises_gaussian,
)


class StiffnessError(ValueError):
    pass


def wrap_phase(theta):
    out = np.mod(theta, TWO_PI)
    # mod can round up to exactly 2*pi for tiny negative inputs
    out[out >= TWO_PI] = 0.0
    return out


@dataclass
class ParticleEnsemble:
    theta: np.ndarray
    w: np.ndarray
    nu: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        self.theta = wrap_phase(np.array(self.theta, dtype=float, ndmin=1))
        self.w = np.array(self.w, dtype=float, ndmin=1)
        nu = np.array(self.nu, dtype=float, ndmin=1)
        nu.flags.writeable = False
        self.nu = nu
        if not (self.theta.shape == self.w.shape == self.nu.shape) or self.theta.ndim != 1:
            raise ValueError("theta, w and nu must be 1-d arrays of equal length")
        if self.theta.size < 1:
            raise ValueError("ensemble must contain at least one oscillator")

    @property
    def N(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based Gaussian increments.

    The draw for step k comes from a Philox generator keyed by (seed, k), so the
    increments depend only on the seed and step, never on how the work is split.
    Oscillator i always receives entry i of the step's draw.
    """

    seed: int

    def generator(self, step: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, step])))

    def increments(self, step: int, n: int, dt: float) -> np.ndarray:
        return self.generator(step).standard_normal(n) * np.sqrt(dt)


# --------------------------------------------------------------------------
# initial data

PHASE_FAMILIES = ("uniform", "gaussian")
VELOCITY_FAMILIES = ("delta", "gaussian")


def sample_initial(descriptor: dict, N: int, seed: int) -> ParticleEnsemble:
    """Draw an ensemble from a descriptor such as::

        {"phase": {"family": "gaussian", "mu": 0.0, "s": 0.3},
         "velocity": {"family": "gaussian", "mean": 0.0, "std": 1.0, "around_nu": True},
         "frequency": {"kind": "normal", "mean": 0.0, "std": 0.5}}

    Missing blocks default to uniform phases, w = 0 and nu = 0. With
    ``around_nu`` the velocity mean is shifted by each oscillator's nu.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A17]))

    freq = descriptor.get("frequency", {"kind": "point", "value": 0.0})
    kind = freq.get("kind", "point")
    if kind == "point":
        nu = np.full(N, float(freq.get("value", 0.0)))
    elif kind == "normal":
        nu = rng.normal(float(freq.get("mean", 0.0)), float(freq["std"]), N)
    elif kind == "uniform":
        nu = rng.uniform(float(freq["low"]), float(freq["high"]), N)
    else:
        raise ValueError(f"unknown frequency distribution kind {kind!r}")

    ph = descriptor.get("phase", {"family": "uniform"})
    family = ph.get("family")
    if family == "uniform":
        theta = rng.uniform(0.0, TWO_PI, N)
    elif family == "gaussian":
        theta = rng.normal(float(ph.get("mu", 0.0)), float(ph["s"]), N)
    else:
        raise ValueError(f"unknown phase family {family!r}; expected one of {PHASE_FAMILIES}")

    vel = descriptor.get("velocity", {"family": "delta", "value": 0.0})
    family = vel.get("family")
    if family == "delta":
        w = np.full(N, float(vel.get("value", 0.0)))
    elif family == "gaussian":
        w = rng.normal(float(vel.get("mean", 0.0)), float(vel["std"]), N)
    else:
        raise ValueError(f"unknown velocity family {family!r}; expected one of {VELOCITY_FAMILIES}")
    if vel.get("around_nu", False):
        w = w + nu

    return ParticleEnsemble(theta, w, nu)


# --------------------------------------------------------------------------
# dynamics


def pairwise_sync_force(e: ParticleEnsemble, K: float) -> np.ndarray:
    """(K/N) sum_j sin(theta_j - theta_i) from the two global sums."""
    s, c = np.sin(e.theta), np.cos(e.theta)
    S, C = s.sum(), c.sum()
    return (K / e.N) * (S * c - C * s)


def step(e: ParticleEnsemble, dt: float, p: PhysicalParams, ns: NoiseStream) -> ParticleEnsemble:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > p.m / 10:
        raise StiffnessError(f"dt={dt:.4g} exceeds m/10={p.m / 10:.4g}")
    force = pairwise_sync_force(e, p.K) if p.K else 0.0
    dW = ns.increments(e.step_index, e.N, dt)
    w = e.w + (dt / p.m) * (-e.w + e.nu + force) + (np.sqrt(2.0 * p.sigma) / p.m) * dW
    theta = e.theta + e.w * dt
    return ParticleEnsemble(theta, w, e.nu, e.step_index + 1)


class OrderStats(NamedTuple):
    R: float
    psi: float


def empirical_order_stats(e: ParticleEnsemble) -> OrderStats:
    z = np.exp(1j * e.theta).mean()
    return OrderStats(float(min(abs(z), 1.0)), float(np.angle(z) % TWO_PI))


def simulate(e: ParticleEnsemble, p: PhysicalParams, ns: NoiseStream, dt: float, t_end: float,
             record_every: int = 0):
    """Run ``round(t_end / dt)`` steps; optionally record (t, R, psi, mean_w, var_w) rows."""
    n = int(round(t_end / dt))
    rows = []

    def record(k, ens):
        R, psi = empirical_order_stats(ens)
        rows.append((k * dt, R, psi, float(ens.w.mean()), float(ens.w.var())))

    if record_every:
        record(0, e)
    for k in range(1, n + 1):
        e = step(e, dt, p, ns)
        if record_every and k % record_every == 0:
            record(k, e)
    return e, rows


def write_order_series(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "R", "psi", "mean_w", "var_w"])
        for r in rows:
            out.writerow([f"{v:.17g}" for v in r])


# --------------------------------------------------------------------------
# density estimation


class EmpiricalField(NamedTuple):
    field: KineticField
    occupied: np.ndarray  # one flag per nu slice
    counts: np.ndarray  # oscillators assigned to each nu slice
    outside: int  # oscillators whose w falls outside the velocity grid


def nu_bins(nu, freq: FrequencyQuadrature) -> np.ndarray:
    """Index of the nearest quadrature node for each natural frequency."""
    order = np.argsort(freq.nodes)
    sorted_nodes = freq.nodes[order]
    cuts = 0.5 * (sorted_nodes[1:] + sorted_nodes[:-1])
    return order[np.searchsorted(cuts, nu)]


def empirical_kinetic(e: ParticleEnsemble, phase: PhaseGrid, velocity: VelocityGrid,
                      freq: FrequencyQuadrature) -> EmpiricalField:
    """Histogram density on the solver grids, each occupied nu slice normalised to mass one.

    Velocity cells are centred on the grid nodes. Empty slices stay zero and are
    marked unoccupied.
    """
    dth, dw = phase.spacing, velocity.spacing
    q = nu_bins(e.nu, freq)
    i = np.minimum((e.theta / dth).astype(int), phase.n_theta - 1)
    j = np.floor((e.w - velocity.w_min) / dw + 0.5).astype(int)
    inside = (j >= 0) & (j < velocity.n_w)
    shape = (freq.n_nu, phase.n_theta, velocity.n_w)
    counts = np.zeros(shape)
    np.add.at(counts, (q[inside], i[inside], j[inside]), 1.0)
    per_slice = counts.sum(axis=(1, 2))
    occupied = per_slice > 0
    scale = np.where(occupied, 1.0 / (np.where(occupied, per_slice, 1.0) * dth * dw), 0.0)
    values = counts * scale[:, None, None]
    return EmpiricalField(KineticField(values, phase, velocity, freq), occupied,
                          np.bincount(q, minlength=freq.n_nu), int((~inside).sum()))


def w_marginal_l1(e: ParticleEnsemble, velocity: VelocityGrid, V: float, w0: float = 1.0) -> float:
    """L1 distance between the histogram of w / w0 and the unit Gaussian centred at V."""
    dw = velocity.spacing
    j = np.floor((e.w / w0 - velocity.w_min) / dw + 0.5).astype(int)
    hist = np.bincount(j[(j >= 0) & (j < velocity.n_w)], minlength=velocity.n_w) / (e.N * dw)
    return float(np.abs(hist - von_mises_gaussian(velocity.nodes, V)).sum() * dw)
