"""Muckenhoupt constants of the Gaussian weight and the weighted Hardy inequality.

For the half-line [d, inf) the Muckenhoupt quantity is

    B_L(d, V) = sup_{r > d} (int_r^inf M_V) (int_d^r 1 / M_V),

and the best Hardy constant C_L satisfies B_L <= C_L <= 4 B_L. The reflected
half-line (-inf, d] has B~_L(d, V) = B_L(2V - d, V).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, optimize

from .core import VelocityGrid, von_mises_gaussian

SQRT2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)
SCAN_LENGTH = 12.0
# beyond this a = (r - V) / sqrt(2) the tail factor comes from the series
SERIES_WINDOW = 5.0


class QuadratureError(RuntimeError):
    pass


def _series_terms(a: float, n_terms: int):
    """Scaled terms (-1)^k (2k-1)!! / (2^{k+1} a^{2k+1}), cut before the first growing one."""
    if a * a <= 0.5:
        raise ValueError(f"a={a:.4g}: no decreasing term (need a^2 > 1/2); use quadrature")
    terms = []
    t = 1.0 / (2.0 * a)
    k = 0
    while True:
        terms.append(t)
        nxt = -t * (2 * k + 1) / (2.0 * a * a)
        k += 1
        if k >= n_terms or abs(nxt) > abs(t):
            return terms, abs(nxt)
        t = nxt


def asymptotic_tail(a: float, n_terms: int = 64):
    """Optimally truncated series for int_a^inf exp(-x^2) dx.

    Returns (value, bound) where bound is the magnitude of the first omitted term.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    terms, omitted = _series_terms(a, n_terms)
    scale = math.exp(-a * a)
    return scale * math.fsum(terms), scale * omitted


def _scaled_tail(a: float):
    """exp(a^2) * int_a^inf exp(-x^2) dx and its error estimate."""
    if a > SERIES_WINDOW:
        terms, omitted = _series_terms(a, 64)
        return math.fsum(terms), omitted
    # exp(a^2 - x^2) with x = a + t
    val, err = integrate.quad(lambda t: math.exp(-t * (2.0 * a + t)), 0.0, np.inf,
                              epsabs=0.0, epsrel=1e-12, limit=200)
    return val, err


def _scaled_inner(b: float, a: float):
    """exp(-a^2) * int_b^a exp(x^2) dx and its error estimate."""
    val, err = integrate.quad(lambda x: math.exp((x - a) * (x + a)), b, a,
                              epsabs=0.0, epsrel=1e-12, limit=200)
    return val, err


def muckenhoupt_product(r: float, d: float, V: float = 0.0):
    """(int_r^inf M_V dw)(int_d^r dw / M_V) and a relative error estimate.

    With a = (r - V)/sqrt(2), b = (d - V)/sqrt(2) the product equals
    2 (int_a^inf e^{-x^2}) (int_b^a e^{x^2}).
    """
    if r <= d:
        return 0.0, 0.0
    a, b = (r - V) / SQRT2, (d - V) / SQRT2
    if a <= 0:
        # both factors moderate; integrate in w directly
        tail = 0.5 * math.erfc(a)
        inner, err = integrate.quad(lambda w: 1.0 / von_mises_gaussian(w, V), d, r,
                                    epsabs=0.0, epsrel=1e-12, limit=200)
        return tail * inner, err / inner if inner else 0.0
    T, eT = _scaled_tail(a)
    S, eS = _scaled_inner(b, a)
    prod = 2.0 * T * S
    return prod, (eT / T + (eS / S if S else 0.0))


def reduced_product(r: float, d: float, V: float = 0.0) -> float:
    """(int_a^inf e^{-x^2} dx)(int_b^a e^{x^2} dx): the Muckenhoupt product without the
    factor 2 carried by the Gaussian normalization; ~ 1/(4 a^2) for large a."""
    return 0.5 * muckenhoupt_product(r, d, V)[0]


@dataclass
class HardyReport:
    d: float
    V: float
    B_L: float
    B_tilde_L: float
    bracket_lo: float
    bracket_hi: float
    bracket_empty: bool
    r_star: float
    r_star_tilde: float
    quad_error: float
    quad_error_tilde: float

    @property
    def safe_bound(self) -> float:
        """4 max(B_L, B~_L): bounds the full-line ratio regardless of the bracket."""
        return 4.0 * max(self.B_L, self.B_tilde_L)

    @property
    def hardy_constant(self) -> float:
        """Upper end of the bracket, or the safe bound when the bracket is empty."""
        return self.safe_bound if self.bracket_empty else self.bracket_hi

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _sup_product(d: float, V: float, n_scan: int = 240):
    """Maximise the product over r in (d, d + 12]: log-spaced scan, then golden section."""
    offsets = SCAN_LENGTH * np.logspace(-5, 0, n_scan)
    r = d + offsets
    vals = np.array([muckenhoupt_product(x, d, V)[0] for x in r])
    k = int(np.argmax(vals))
    if 0 < k < n_scan - 1:
        res = optimize.minimize_scalar(lambda x: -muckenhoupt_product(x, d, V)[0],
                                       bracket=(r[k - 1], r[k], r[k + 1]), method="golden",
                                       tol=1e-10)
        r_best = float(res.x)
    else:
        r_best = float(r[k])
    best, rel_err = muckenhoupt_product(r_best, d, V)
    if best < vals[k]:
        best, r_best, rel_err = vals[k], float(r[k]), muckenhoupt_product(float(r[k]), d, V)[1]
    if not np.isfinite(best) or rel_err > 1e-6:
        raise QuadratureError(f"Muckenhoupt product unreliable at r={r_best:.4g} (rel err {rel_err:.2e})")
    return float(best), r_best, float(rel_err * best)


def muckenhoupt_BL(d: float, V: float = 0.0) -> HardyReport:
    B, r_star, err = _sup_product(d, V)
    Bt, r_star_t, err_t = _sup_product(2.0 * V - d, V)
    lo, hi = max(B, Bt), min(4.0 * B, 4.0 * Bt)
    return HardyReport(d=float(d), V=float(V), B_L=B, B_tilde_L=Bt, bracket_lo=lo, bracket_hi=hi,
                       bracket_empty=bool(lo > hi), r_star=r_star, r_star_tilde=r_star_t,
                       quad_error=err, quad_error_tilde=err_t)


# --------------------------------------------------------------------------
# discrete Hardy ratios


def _anchor_check(u, grid, d, tol):
    w = grid.nodes
    scale = np.max(np.abs(u))
    if scale == 0:
        return
    if abs(np.interp(d, w, u)) > tol * scale:
        raise ValueError(f"profile does not vanish at the anchor d={d:.6g}")


def hardy_ratio(u_profile, V: float, d: float, grid: VelocityGrid, anchor_tol: float = 1e-2) -> float:
    """sum u^2 M_V dw / sum (u')^2 M_V dw with centred-difference u'; zero for u == 0."""
    u = np.asarray(u_profile, dtype=float)
    _anchor_check(u, grid, d, anchor_tol)
    M = von_mises_gaussian(grid.nodes, V)
    du = np.gradient(u, grid.spacing)
    den = np.sum(du * du * M)
    if den == 0:
        return 0.0
    return float(np.sum(u * u * M) / den)


def hardy_half_ratios(u_profile, V: float, d: float, grid: VelocityGrid):
    """Ratios restricted to w >= d and to w <= d, for the side-specific brackets."""
    u = np.asarray(u_profile, dtype=float)
    w = grid.nodes
    M = von_mises_gaussian(w, V)
    du = np.gradient(u, grid.spacing)
    out = []
    for side in (w >= d, w <= d):
        den = np.sum((du * du * M)[side])
        out.append(float(np.sum((u * u * M)[side]) / den) if den else 0.0)
    return tuple(out)


def within_bracket(ratio: float, report: HardyReport, slack: float = 1.05) -> bool:
    return ratio <= report.bracket_hi * slack
