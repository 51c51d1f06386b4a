"""Berestycki-Lions nonlinearities of two-power type.

f(xi) = -m*xi + a*|xi|^(p-1)*xi - b*|xi|^(q-1)*xi

with m, a > 0, b >= 0.  The standard conditions are

  (f1)  subcritical growth:  f(xi)/|xi|^(2*-1) -> 0,  2* = 2N/(N-2);
  (f2)  negative linearization at zero:  limsup f(xi)/xi < 0;
  (f3)  some zeta0 > 0 with F(zeta0) > 0, F the primitive of f.

The splitting used by the solver is f = g - lambda*xi with lambda = m/2,
g = h+ - h- and h+- the signed positive/negative parts of g; h+ vanishes
on [-nu, nu].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class NonlinearityError(ValueError):
    """Invalid nonlinearity parameters."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """Two-power Berestycki-Lions nonlinearity; see module docstring."""

    m: float
    a: float
    b: float = 0.0
    p: float = 3.0
    q: float = 5.0
    family: str = "power_combo"

    def __post_init__(self):
        if self.m <= 0:
            raise NonlinearityError(f"m must be positive (condition (f2)), got {self.m}")
        if self.a <= 0:
            raise NonlinearityError(f"a must be positive, got {self.a}")
        if self.b < 0:
            raise NonlinearityError(f"b must be nonnegative, got {self.b}")
        if self.p <= 1:
            raise NonlinearityError(f"p must exceed 1, got {self.p}")
        if self.b > 0 and self.q <= 1:
            raise NonlinearityError(f"q must exceed 1, got {self.q}")

    @property
    def lam(self) -> float:
        """lambda = -(1/2) limsup f(xi)/xi = m/2 for this family."""
        return self.m / 2.0


@dataclass(frozen=True)
class SplitEval:
    """Pointwise splitting g = h_plus - h_minus at one xi."""

    g: float
    h_plus: float
    h_minus: float


@dataclass(frozen=True)
class ConditionReport:
    f1: bool
    f2: bool
    f3: bool
    zeta0: float | None
    notes: tuple


def eval_f(spec: NonlinearitySpec, xi):
    """f(xi); odd in xi, accepts scalars or arrays."""
    xi = np.asarray(xi, dtype=float)
    out = -spec.m * xi + spec.a * np.abs(xi) ** (spec.p - 1) * xi
    if spec.b:
        out = out - spec.b * np.abs(xi) ** (spec.q - 1) * xi
    return out if out.ndim else float(out)


def eval_fprime(spec: NonlinearitySpec, xi):
    """f'(xi) (even), used in Newton Jacobians."""
    xi = np.asarray(xi, dtype=float)
    out = -spec.m + spec.a * spec.p * np.abs(xi) ** (spec.p - 1)
    if spec.b:
        out = out - spec.b * spec.q * np.abs(xi) ** (spec.q - 1)
    return out if out.ndim else float(out)


def eval_F(spec: NonlinearitySpec, xi):
    """Primitive F(xi) = int_0^xi f; even, F(0) = 0."""
    xi = np.asarray(xi, dtype=float)
    out = -spec.m * xi ** 2 / 2.0 + spec.a * np.abs(xi) ** (spec.p + 1) / (spec.p + 1)
    if spec.b:
        out = out - spec.b * np.abs(xi) ** (spec.q + 1) / (spec.q + 1)
    return out if out.ndim else float(out)


def eval_g(spec: NonlinearitySpec, xi):
    """g(xi) = f(xi) + lambda*xi."""
    xi = np.asarray(xi, dtype=float)
    out = eval_f(spec, xi) + spec.lam * xi
    return out if np.ndim(out) else float(out)


def critical_exponent(dim: int) -> float:
    """2* - 1 = (N+2)/(N-2), the critical power for (f1)."""
    return (dim + 2.0) / (dim - 2.0)


def check_conditions(spec: NonlinearitySpec, dim: int, xi_scan: float = 50.0,
                     n_scan: int = 10000) -> ConditionReport:
    """Decide (f1)-(f3) for the given ambient dimension.

    (f3) is established by scanning F on (0, xi_scan] and refining the first
    sign change by bisection; an inconclusive scan is reported, not fatal.
    """
    crit = critical_exponent(dim)
    growth = max(spec.p, spec.q) if spec.b > 0 else spec.p
    f1 = growth < crit
    f2 = spec.m > 0
    notes = []
    if not f1:
        notes.append(
            f"(f1) fails: growth exponent {growth} >= critical {crit} for N={dim}")
    xs = np.linspace(xi_scan / n_scan, xi_scan, n_scan)
    Fv = eval_F(spec, xs)
    pos = np.nonzero(Fv > 0.0)[0]
    f3 = bool(pos.size)
    zeta0 = None
    if f3:
        k = pos[0]
        if k == 0:
            zeta0 = float(xs[0])
        else:
            # F <= 0 at xs[k-1], > 0 at xs[k]: bisect the crossing
            zeta0 = float(brentq(lambda t: eval_F(spec, t), xs[k - 1], xs[k],
                                 xtol=1e-14, rtol=1e-14))
    else:
        notes.append(
            f"(f3) not detected on (0, {xi_scan}]: extend scan window")
    return ConditionReport(f1=f1, f2=f2, f3=f3, zeta0=zeta0, notes=tuple(notes))


def split(spec: NonlinearitySpec, xi: float) -> SplitEval:
    """Signed-part splitting of g = f + lambda*xi at one point."""
    g = float(eval_g(spec, xi))
    if xi >= 0:
        hp = max(g, 0.0)
        hm = max(-g, 0.0)
    else:
        hp = min(g, 0.0)
        hm = min(-g, 0.0)
    return SplitEval(g=g, h_plus=hp, h_minus=hm)


def h_plus(spec: NonlinearitySpec, xi):
    """Vectorized h+ part of the splitting."""
    xi = np.asarray(xi, dtype=float)
    g = eval_g(spec, xi)
    return np.where(xi >= 0, np.maximum(g, 0.0), np.minimum(g, 0.0))


def nu_of(spec: NonlinearitySpec) -> float:
    """Largest nu > 0 with g(xi) xi <= 0 on (0, nu]; h+ vanishes on [-nu, nu].

    For xi > 0, g(xi)/xi = -m/2 + a xi^(p-1) - b xi^(q-1); nu is its first
    positive root.  Closed form (m/(2a))^(1/(p-1)) when b = 0.
    """
    if spec.b == 0.0:
        return (spec.m / (2.0 * spec.a)) ** (1.0 / (spec.p - 1.0))
    phi = lambda t: -spec.lam + spec.a * t ** (spec.p - 1) - spec.b * t ** (spec.q - 1)
    # scan outward from 0 for the first sign change of phi
    hi = (spec.m / (2.0 * spec.a)) ** (1.0 / (spec.p - 1.0))
    for _ in range(200):
        if phi(hi) > 0:
            break
        hi *= 1.25
    else:
        # g*xi <= 0 everywhere positive was scanned: nu unbounded in window
        return hi
    lo = hi / 1.25
    while phi(lo) >= 0:
        lo *= 0.5
    return float(brentq(phi, lo, hi, xtol=1e-15, rtol=1e-15))


def positive_primitive_threshold(spec: NonlinearitySpec) -> float | None:
    """Closed-form F = 0 crossing for b = 0 specs (test oracle helper)."""
    if spec.b != 0.0:
        return None
    return (spec.m * (spec.p + 1) / (2.0 * spec.a)) ** (1.0 / (spec.p - 1.0))
