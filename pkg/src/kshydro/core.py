"""Model parameters, grids, Gaussian equilibria and the collision operator.

Array layout used throughout the package: kinetic fields are indexed
``f[q, i, j]`` with ``q`` the natural-frequency node, ``i`` the phase cell and
``j`` the velocity node. Velocity-only profiles put ``w`` on the last axis so
every operator here broadcasts over leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi
LOG_SQRT_2PI = 0.5 * math.log(TWO_PI)

# Tail mass of a unit Gaussian beyond 8 standard deviations is ~1e-15.
COVERAGE_HALFWIDTH = 8.0
# Kernel normalization of the nonlocal coupling: the half-period sine integrates to 2.
KERNEL_NORMALIZATION = 2.0


class CoverageError(ValueError):
    """Velocity grid truncates a Gaussian by more than the allowed mass."""


class WindowError(ValueError):
    """Nonlocal coupling window is not resolved by the phase grid."""


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class PhysicalParams:
    """Inertia ``m``, coupling ``K`` and noise strength ``sigma``."""

    m: float = 1.0
    K: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"inertia m must be positive, got {self.m}")
        if not self.sigma > 0:
            raise ValueError(f"noise strength sigma must be positive, got {self.sigma}")
        if not self.K >= 0:
            raise ValueError(f"coupling K must be nonnegative, got {self.K}")


@dataclass(frozen=True)
class ScaledParams:
    """Units of the dimensionless problem and the hydrodynamic scale.

    ``coupling`` is K expressed in units of the thermal velocity ``w0``.
    """

    w0: float
    t0: float
    alpha: float
    epsilon: float
    coupling: float = 0.0

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")


def nondimensionalize(p: PhysicalParams, epsilon: float) -> ScaledParams:
    if not (p.m > 0 and p.sigma > 0):
        raise ValueError("m and sigma must be positive")
    w0 = math.sqrt(p.sigma / p.m)
    return ScaledParams(
        w0=w0,
        t0=math.sqrt(p.m / p.sigma),
        alpha=math.sqrt(p.sigma * p.m),
        epsilon=epsilon,
        coupling=p.K / w0,
    )


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform cell-centred grid on the torus [0, 2*pi)."""

    n_theta: int

    def __post_init__(self):
        if self.n_theta < 1:
            raise ValueError("n_theta must be >= 1")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.spacing

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_theta + 1) * self.spacing

    def node(self, i: int) -> float:
        return (i % self.n_theta + 0.5) * self.spacing


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform nodes on [w_min, w_max]; node j owns the cell of width ``spacing`` around it."""

    w_min: float
    w_max: float
    n_w: int

    def __post_init__(self):
        if self.n_w < 3:
            raise ValueError("n_w must be >= 3")
        if not self.w_max > self.w_min:
            raise ValueError("w_max must exceed w_min")

    @classmethod
    def covering(cls, v_min: float, v_max: float, n_w: int,
                 halfwidth: float = COVERAGE_HALFWIDTH) -> "VelocityGrid":
        return cls(v_min - halfwidth, v_max + halfwidth, n_w)

    @classmethod
    def centered(cls, V: float, n_w: int, halfwidth: float = COVERAGE_HALFWIDTH) -> "VelocityGrid":
        return cls(V - halfwidth, V + halfwidth, n_w)

    @property
    def spacing(self) -> float:
        return (self.w_max - self.w_min) / (self.n_w - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.w_min, self.w_max, self.n_w)

    @property
    def faces(self) -> np.ndarray:
        """Interior cell interfaces, one between each pair of nodes."""
        return self.nodes[:-1] + 0.5 * self.spacing

    def covers(self, V, halfwidth: float = COVERAGE_HALFWIDTH) -> bool:
        V = np.asarray(V)
        return bool(np.all(V - halfwidth >= self.w_min) and np.all(V + halfwidth <= self.w_max))


@dataclass(frozen=True)
class FrequencyQuadrature:
    """Nodes and weights approximating integrals against the density g(nu)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(weights < 0):
            raise ValueError("quadrature weights must be nonnegative")
        total = weights.sum()
        if not total > 0:
            raise ValueError("quadrature weights must not all vanish")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights / total)

    @property
    def n_nu(self) -> int:
        return self.nodes.size

    @classmethod
    def point(cls, value: float = 0.0) -> "FrequencyQuadrature":
        return cls(np.array([value]), np.array([1.0]))

    @classmethod
    def gauss_hermite(cls, mean: float, std: float, n: int) -> "FrequencyQuadrature":
        """Gauss-Hermite rule for a normal density N(mean, std^2)."""
        x, w = np.polynomial.hermite_e.hermegauss(n)
        return cls(mean + std * x, w)

    @classmethod
    def midpoint(cls, pdf: Callable[[np.ndarray], np.ndarray], low: float, high: float,
                 n: int) -> "FrequencyQuadrature":
        """Midpoint rule for a density supported on [low, high]."""
        h = (high - low) / n
        x = low + (np.arange(n) + 0.5) * h
        return cls(x, np.clip(pdf(x), 0.0, None) * h)

    @classmethod
    def from_descriptor(cls, desc: dict, n: int) -> "FrequencyQuadrature":
        """Build from ``{"kind": "point"|"normal"|"uniform", ...}``."""
        kind = desc.get("kind", "point")
        if kind == "point":
            return cls.point(float(desc.get("value", 0.0)))
        if kind == "normal":
            return cls.gauss_hermite(float(desc.get("mean", 0.0)), float(desc["std"]), n)
        if kind == "uniform":
            low, high = float(desc["low"]), float(desc["high"])
            return cls.midpoint(lambda x: np.ones_like(x), low, high, n)
        raise ValueError(f"unknown frequency distribution kind {kind!r}")


@dataclass
class KineticField:
    """Density values ``f[q, i, j]`` over (nu_q, theta_i, w_j)."""

    values: np.ndarray
    phase: PhaseGrid
    velocity: VelocityGrid
    freq: FrequencyQuadrature

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.freq.n_nu, self.phase.n_theta, self.velocity.n_w)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grids {expected}")

    def mass_per_nu(self) -> np.ndarray:
        return self.values.sum(axis=(1, 2)) * self.phase.spacing * self.velocity.spacing

    def density(self) -> np.ndarray:
        """Per-nu phase densities, integral over w."""
        return self.values.sum(axis=2) * self.velocity.spacing

    def copy_with(self, values: np.ndarray) -> "KineticField":
        return KineticField(values, self.phase, self.velocity, self.freq)


@dataclass
class EquilibriumProfile:
    """Per-nu densities on the phase grid and the coupling fields they induce."""

    P_nu: np.ndarray
    V: np.ndarray
    P: np.ndarray
    Y: np.ndarray
    vacuum: np.ndarray = field(default=None)

    @classmethod
    def from_densities(cls, P_nu: np.ndarray, freq: FrequencyQuadrature, K: float) -> "EquilibriumProfile":
        P_nu = np.asarray(P_nu, dtype=float)
        P = freq.weights @ P_nu
        PY = (freq.weights * freq.nodes) @ P_nu
        vacuum = P < 1e-14
        Y = np.where(vacuum, 0.0, PY / np.where(vacuum, 1.0, P))
        V = effective_velocity(freq.nodes[:, None], P[None, :], K)
        return cls(P_nu=P_nu, V=V, P=P, Y=Y, vacuum=vacuum)


# --------------------------------------------------------------------------
# Gaussians


def maxwellian_dimensional(w, nu, p: PhysicalParams):
    """Dimensional Maxwellian, normalised so that 2*pi times its w-integral is one."""
    s = p.m / p.sigma
    return (1.0 / TWO_PI) * np.sqrt(s / TWO_PI) * np.exp(-0.5 * s * (np.asarray(w) - nu) ** 2)


def log_gaussian(w, V):
    return -0.5 * (np.asarray(w) - V) ** 2 - LOG_SQRT_2PI


def von_mises_gaussian(w, V):
    """Unit-variance Gaussian in w centred at V."""
    return np.exp(log_gaussian(w, V))


class GaussianMoments(NamedTuple):
    mass: float
    centered_first: float
    flux: float
    variance: float


def gaussian_moments(V: float, grid: VelocityGrid, tol: float = 1e-6) -> GaussianMoments:
    w = grid.nodes
    m = von_mises_gaussian(w, V) * grid.spacing
    mass = m.sum()
    if abs(1.0 - mass) > tol:
        raise CoverageError(
            f"grid [{grid.w_min}, {grid.w_max}] loses Gaussian mass {1.0 - mass:.3e} at V={V}")
    return GaussianMoments(mass, ((w - V) * m).sum(), (w * m).sum(), ((w - V) ** 2 * m).sum())


def check_coverage(V, grid: VelocityGrid, tol: float = 1e-6) -> None:
    V = np.atleast_1d(np.asarray(V, dtype=float))
    for v in (V.min(), V.max()):
        gaussian_moments(float(v), grid, tol)


# --------------------------------------------------------------------------
# collision operator


def _broadcast_V(V, f):
    return np.asarray(V, dtype=float)[..., None] if np.ndim(V) else float(V)


def direct_flux(f, V, grid: VelocityGrid):
    """Face fluxes (w - V) f + d_w f with central averaging, shape (..., n_w - 1)."""
    f = np.asarray(f, dtype=float)
    dw = grid.spacing
    s = grid.faces - _broadcast_V(V, f)
    return s * 0.5 * (f[..., 1:] + f[..., :-1]) + (f[..., 1:] - f[..., :-1]) / dw


def factored_weights(V, grid: VelocityGrid):
    """Ratios M(face)/M(right node) and M(face)/M(left node), computed in log form."""
    Vb = np.asarray(V, dtype=float)[..., None] if np.ndim(V) else float(V)
    w = grid.nodes
    log_face = log_gaussian(grid.faces, Vb)
    a = np.exp(log_face - log_gaussian(w[1:], Vb))
    b = np.exp(log_face - log_gaussian(w[:-1], Vb))
    return a, b


def factored_flux(f, V, grid: VelocityGrid):
    """Face fluxes M_V d_w(f / M_V), shape (..., n_w - 1)."""
    f = np.asarray(f, dtype=float)
    a, b = factored_weights(V, grid)
    return (a * f[..., 1:] - b * f[..., :-1]) / grid.spacing


def _divergence(flux, dw):
    # zero flux through the outer faces of the truncated velocity domain
    pad = [(0, 0)] * (flux.ndim - 1) + [(1, 1)]
    F = np.pad(flux, pad)
    return (F[..., 1:] - F[..., :-1]) / dw


def collision_Q_direct(f_slice, V, grid: VelocityGrid):
    """d_w((w - V) f) + d_w^2 f in conservative central differences."""
    return _divergence(direct_flux(f_slice, V, grid), grid.spacing)


def collision_Q_factored(f_slice, V, grid: VelocityGrid):
    """d_w(M_V d_w(f / M_V)); annihilates sampled Gaussians exactly."""
    return _divergence(factored_flux(f_slice, V, grid), grid.spacing)


# --------------------------------------------------------------------------
# coupling fields and equilibria


def mean_flux_phi(f: KineticField) -> np.ndarray:
    return f.freq.weights @ f.density()


def effective_velocity(nu, Phi, K: float):
    return nu + K * Phi


def equilibrium_build(profile: EquilibriumProfile, phase: PhaseGrid, velocity: VelocityGrid,
                      freq: FrequencyQuadrature) -> KineticField:
    check_coverage(profile.V, velocity)
    M = von_mises_gaussian(velocity.nodes[None, None, :], profile.V[:, :, None])
    return KineticField(profile.P_nu[:, :, None] * M, phase, velocity, freq)


def kernel_weights(epsilon: float, phase: PhaseGrid) -> np.ndarray:
    """Weights of the one-sided sine kernel on phase offsets k * dtheta, k >= 0.

    Each weight is the exact integral of sin(s / eps) / (c * eps) over the part of
    cell k that lies in the arc (0, eps * pi), c the kernel normalization.
    """
    dth = phase.spacing
    width = epsilon * math.pi
    if width < 2 * dth:
        raise WindowError(f"window eps*pi={width:.4g} is shorter than two cells ({2 * dth:.4g})")
    n = int(math.ceil(width / dth - 0.5)) + 1
    k = np.arange(n)
    lo = np.clip((k - 0.5) * dth, 0.0, width)
    hi = np.clip((k + 0.5) * dth, 0.0, width)
    return (np.cos(lo / epsilon) - np.cos(hi / epsilon)) / KERNEL_NORMALIZATION


def nonlocal_J_eps(f: KineticField, epsilon: float) -> np.ndarray:
    weights = kernel_weights(epsilon, f.phase)
    rho = mean_flux_phi(f)
    J = np.zeros_like(rho)
    for k, wk in enumerate(weights):
        J += wk * np.roll(rho, -k)
    return J


# --------------------------------------------------------------------------
# duality products


def _log_weighted_ratio(num, log_den):
    # num / exp(log_den) without forming 1/M
    with np.errstate(divide="ignore"):
        mag = np.log(np.abs(num))
    return np.sign(num) * np.exp(mag - log_den)


def duality_green_check(f, h, V, grid: VelocityGrid, freq: FrequencyQuadrature):
    """Weighted duality products of two (nu, w) fields and the Green-identity residual.

    ``pair1`` uses node-centred derivatives of f/M_V in the form
    f' + (w - V) f, while the operator pairing uses the face-based factored Q_V,
    so the residual measures consistency of two independent discretizations.
    """
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    if f.shape != h.shape:
        raise ValueError("f and h must share a grid")
    V = np.broadcast_to(np.asarray(V, dtype=float), f.shape[:-1])
    w = grid.nodes
    dw = grid.spacing
    logM = log_gaussian(w, V[..., None])
    wts = freq.weights.reshape((-1,) + (1,) * (f.ndim - 1))

    pair0 = float(np.sum(wts * _log_weighted_ratio(f * h, logM)) * dw)
    gf = np.gradient(f, dw, axis=-1) + (w - V[..., None]) * f
    gh = np.gradient(h, dw, axis=-1) + (w - V[..., None]) * h
    pair1 = float(np.sum(wts * _log_weighted_ratio(gf * gh, logM)) * dw)
    Qf = collision_Q_factored(f, V, grid)
    qpair = float(np.sum(wts * _log_weighted_ratio(Qf * h, logM)) * dw)
    return pair0, pair1, abs(qpair + pair1)
