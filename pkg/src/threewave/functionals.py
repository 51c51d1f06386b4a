"""Energies, residuals, Pohozaev functional and dual norms for the
three-wave interaction system

    -Delta u_i = f_i(u_i) + alpha * u_j u_k   (i,j,k) cyclic,

with associated functional I_alpha(u) = sum_i J_i(u_i) - alpha int u1 u2 u3,
J_i(u) = 1/2 ||grad u||^2 - int F_i(u).

Reported energies use the trapezoid/4th-order quadratures of
:mod:`threewave.radial`; the solver's discrete objective (`action`) uses the
variational layer, whose exact gradient is the strong residual below.  The
dual norm is the energy norm of the Riesz representative of the residual in
the (-Delta + lambda_i) inner products.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solveh_banded

from .nonlinearity import (NonlinearitySpec, check_conditions, eval_F, eval_f,
                           eval_fprime)
from .radial import (RadialField, RadialGrid, VectorState, face_gradient_form,
                     gradient_sq, integrate, integrate_values, laplacian_apply,
                     volume_integrate)


class SolverError(RuntimeError):
    """Numerical failure in a solver stage."""


@dataclass(frozen=True)
class SystemSpec:
    """Three nonlinearities + coupling alpha on a shared grid.

    All species must pass (f1) and (f2) for the grid dimension; which pass
    (f3) is recorded in `f3_indices`.
    """

    specs: tuple
    alpha: float
    grid: RadialGrid

    def __post_init__(self):
        if len(self.specs) != 3:
            raise ValueError("SystemSpec requires exactly three nonlinearities")
        f3 = []
        for i, sp in enumerate(self.specs):
            rep = check_conditions(sp, self.grid.dim)
            if not rep.f1:
                raise ValueError(
                    f"species {i+1} violates (f1) for N={self.grid.dim}: " + "; ".join(rep.notes))
            if not rep.f2:
                raise ValueError(f"species {i+1} violates (f2)")
            if rep.f3:
                f3.append(i)
        object.__setattr__(self, "_f3_indices", tuple(f3))

    @property
    def f3_indices(self) -> tuple:
        return self._f3_indices  # type: ignore[attr-defined]

    @property
    def lambdas(self) -> tuple:
        return tuple(sp.lam for sp in self.specs)

    def with_alpha(self, alpha: float) -> "SystemSpec":
        return SystemSpec(self.specs, float(alpha), self.grid)


@dataclass(frozen=True)
class EnergyReport:
    J: tuple
    triple: float
    I_alpha: float
    P: tuple
    residual_dual_norm: float


def energy_J(spec: NonlinearitySpec, u: RadialField) -> float:
    """Scalar action J(u) = 1/2 ||grad u||^2 - int F(u)."""
    return 0.5 * gradient_sq(u) - integrate_values(u.grid, eval_F(spec, u.values))


def pohozaev(spec: NonlinearitySpec, u: RadialField) -> float:
    """P(u) = (N-2)/2 ||grad u||^2 - N int F(u); zero at solutions."""
    N = u.grid.dim
    return ((N - 2) / 2.0 * gradient_sq(u)
            - N * integrate_values(u.grid, eval_F(spec, u.values)))


def triple_product(state: VectorState) -> float:
    u1, u2, u3 = state
    return integrate_values(state.grid, u1.values * u2.values * u3.values)


def residual(sys: SystemSpec, state: VectorState) -> VectorState:
    """Strong residual; component i is -Delta u_i - f_i(u_i) - alpha u_j u_k.

    Zero residual characterizes a discrete solution; the residual is the
    exact gradient of `action` w.r.t. the cell-volume inner product.
    """
    u1, u2, u3 = state
    a = sys.alpha
    r1 = -laplacian_apply(u1).values - eval_f(sys.specs[0], u1.values) - a * u2.values * u3.values
    r2 = -laplacian_apply(u2).values - eval_f(sys.specs[1], u2.values) - a * u3.values * u1.values
    r3 = -laplacian_apply(u3).values - eval_f(sys.specs[2], u3.values) - a * u1.values * u2.values
    g = state.grid
    return VectorState((RadialField(g, r1), RadialField(g, r2), RadialField(g, r3)))


def action(sys: SystemSpec, state: VectorState) -> float:
    """Discrete objective minimized by the solvers (variational layer)."""
    g = state.grid
    val = 0.0
    for sp, u in zip(sys.specs, state):
        val += 0.5 * face_gradient_form(g, u.values, u.values)
        val -= volume_integrate(g, eval_F(sp, u.values))
    u1, u2, u3 = state
    val -= sys.alpha * volume_integrate(g, u1.values * u2.values * u3.values)
    return val


@lru_cache(maxsize=64)
def _riesz_banded(grid: RadialGrid, lam: float) -> np.ndarray:
    """Upper-banded SPD matrix of the (-Delta + lam) form on interior nodes."""
    n = grid.n - 1
    h = grid.h
    af = grid.face_area
    vol = grid.cell_volumes
    diag = np.empty(n)
    diag[0] = af[0] / h + lam * vol[0]
    diag[1:] = (af[:n - 1] + af[1:n]) / h + lam * vol[1:n]
    ab = np.zeros((2, n))
    ab[0, 1:] = -af[:n - 1] / h
    ab[1, :] = diag
    return ab


def riesz_representative(grid: RadialGrid, lam: float, res_values: np.ndarray):
    """Solve (-Delta + lam) v = res (Dirichlet at r_max).

    Returns (v as full-length array with v[n-1] = 0, contribution to the
    squared dual norm sphere_area * v . (V res)).
    """
    n = grid.n - 1
    rhs = grid.cell_volumes[:n] * res_values[:n]
    try:
        v = solveh_banded(_riesz_banded(grid, lam), rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD by construction
        raise SolverError(f"Riesz solve failed (lambda={lam}): {exc}") from exc
    full = np.zeros(grid.n)
    full[:n] = v
    return full, grid.sphere_area * float(np.dot(v, rhs))


def dual_norm(sys: SystemSpec, res: VectorState) -> float:
    """Computable surrogate for the dual norm of the first variation.

    sqrt of sum_i ||v_i||^2_{lambda_i} with v_i the lambda_i-Riesz
    representative of component i.
    """
    total = 0.0
    for lam, r in zip(sys.lambdas, res):
        _, contrib = riesz_representative(sys.grid, lam, r.values)
        total += contrib
    return float(np.sqrt(max(total, 0.0)))


def gradient_state(sys: SystemSpec, state: VectorState):
    """Preconditioned gradient G (Riesz representatives) and dual norm.

    Returns (residual, G, dual) where G is a VectorState and
    dual = ||G||_H = ||I'(state)||_* in the lambda inner products.
    """
    res = residual(sys, state)
    g = state.grid
    parts = []
    total = 0.0
    for lam, r in zip(sys.lambdas, res):
        v, contrib = riesz_representative(g, lam, r.values)
        parts.append(RadialField(g, v))
        total += contrib
    return res, VectorState(tuple(parts)), float(np.sqrt(max(total, 0.0)))


def energy_I(sys: SystemSpec, state: VectorState) -> EnergyReport:
    """Full energy report: J_i, triple product, I_alpha, P_i, dual norm."""
    Js = tuple(energy_J(sp, u) for sp, u in zip(sys.specs, state))
    T = triple_product(state)
    I = Js[0] + Js[1] + Js[2] - sys.alpha * T
    Ps = tuple(pohozaev(sp, u) for sp, u in zip(sys.specs, state))
    dn = dual_norm(sys, residual(sys, state))
    return EnergyReport(J=Js, triple=T, I_alpha=I, P=Ps, residual_dual_norm=dn)


def coupled_pohozaev_residual(sys: SystemSpec, state: VectorState) -> float:
    """Diagnostic |sum_i P_i(u_i) - N alpha int u1 u2 u3|.

    Vanishes in the continuum at critical points (dilation derivative of
    I_alpha); discretely dominated by O(h^2) dilation error.
    """
    Ps = sum(pohozaev(sp, u) for sp, u in zip(sys.specs, state))
    return abs(Ps - sys.grid.dim * sys.alpha * triple_product(state))


def state_h_norm_sq(sys: SystemSpec, state: VectorState) -> float:
    """Squared product H^1 norm (lambda = 1 in each component)."""
    from .radial import inner_lambda
    return sum(inner_lambda(u, u, 1.0) for u in state)
