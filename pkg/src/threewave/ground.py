"""Least-energy radial ground states of -Delta u = f(u) by two routes.

* `shoot`: overshoot/undershoot bisection on the initial height u(0) of the
  radial ODE u'' + (N-1)/r u' + f(u) = 0, u'(0) = 0, with an adaptive
  high-order integrator and an analytic linearized tail graft.  Serves as
  the independent oracle.
* `manifold_minimize`: minimization of the scalar action J on the Pohozaev
  manifold {P = 0} by alternating dilation projection and preconditioned
  descent, finished by damped Newton on the unconstrained residual.

Both routes return profiles normalized onto {P = 0} by a final dilation
projection, which makes the level identity c = (1/N)||grad omega||^2 exact
by construction.  `least_energy_set` cross-certifies the two routes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded
from scipy.optimize import brentq
from scipy.special import kv

from .functionals import SolverError, energy_J, pohozaev, riesz_representative
from .nonlinearity import (NonlinearitySpec, check_conditions, eval_F, eval_f,
                           eval_fprime)
from .radial import (RadialField, RadialGrid, dilate, face_gradient_form,
                     gradient_sq, h1_norm, integrate_values, laplacian_apply,
                     volume_integrate)


class BracketingError(SolverError):
    """Shooting bisection could not bracket a decaying profile."""


class SeedError(SolverError):
    """Seed cannot be projected onto the Pohozaev manifold."""


class AmbiguityError(SolverError):
    """The two ground-state routes disagree beyond threshold."""


@dataclass
class GroundState:
    """A certified least-energy radial solution.

    c is the action level; pohozaev_residual the (tiny, post-projection)
    value of P at the returned profile; shoot_height the bisected initial
    value u(0) when produced by the shooting route.
    """

    omega: RadialField
    c: float
    lam: float
    pohozaev_residual: float
    method: str
    shoot_height: float | None = None
    c_oracle: float | None = None
    oracle_h1_gap: float | None = None

    @property
    def grid(self) -> RadialGrid:
        return self.omega.grid

    def gradient_sq(self) -> float:
        return gradient_sq(self.omega)

    def h1_norm(self) -> float:
        return h1_norm(self.omega)


def _scalar_residual(spec: NonlinearitySpec, u: RadialField) -> np.ndarray:
    return -laplacian_apply(u).values - eval_f(spec, u.values)


def _scalar_dual(spec: NonlinearitySpec, u: RadialField) -> float:
    res = _scalar_residual(spec, u)
    _, contrib = riesz_representative(u.grid, spec.lam, res)
    return float(np.sqrt(max(contrib, 0.0)))


def project_pohozaev(spec: NonlinearitySpec, u: RadialField,
                     s_window: float = 2.5) -> tuple[RadialField, float]:
    """Dilate u onto {P = 0}; returns (projected field, dilation s)."""
    P0 = pohozaev(spec, u)
    if P0 == 0.0:
        return u.copy(), 0.0
    phi = lambda s: pohozaev(spec, dilate(u, s))
    # closed-form estimate from exact dilation scaling of the two P terms
    N = u.grid.dim
    G = gradient_sq(u)
    Fi = integrate_values(u.grid, eval_F(spec, u.values))
    if Fi <= 0.0:
        raise SeedError("seed below Pohozaev manifold reach: int F(seed) <= 0")
    s_est = 0.5 * np.log((N - 2) * G / (2.0 * N * Fi))
    if abs(s_est) > s_window:
        raise SeedError("seed below Pohozaev manifold reach: projection dilation too large")
    lo, hi = s_est - 1e-3, s_est + 1e-3
    width = 1e-3
    while phi(lo) * phi(hi) > 0:
        width *= 4.0
        if width > s_window or abs(s_est) + width > 2.95:
            raise SeedError("seed below Pohozaev manifold reach: no dilation zero of P")
        lo, hi = s_est - width, s_est + width
    s_star = brentq(phi, lo, hi, xtol=1e-15, rtol=8.9e-16)
    return dilate(u, s_star), float(s_star)


def _tail_graft(grid: RadialGrid, spec: NonlinearitySpec, u: np.ndarray,
                level: float) -> np.ndarray:
    """Replace the profile beyond where it falls under `level` with the
    decaying solution of the linearized equation u'' + (N-1)/r u' = m u,
    i.e. const * r^(1-N/2) K_{N/2-1}(sqrt(m) r).  Removes the noise that
    shooting sensitivity injects into the far tail."""
    below = np.nonzero(u < level)[0]
    if below.size == 0:
        return u
    k = int(below[0])
    if k < grid.n // 4:  # profile too shallow to graft safely
        return u
    sm = np.sqrt(spec.m)
    r = grid.nodes
    nu = grid.dim / 2.0 - 1.0
    tail = r[k:] ** (1.0 - grid.dim / 2.0) * kv(nu, sm * r[k:])
    out = u.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        amp = u[k] / tail[0]
    out[k:] = amp * tail
    return out


def _integrate_profile(spec: NonlinearitySpec, grid: RadialGrid, h0: float,
                       rtol: float, events: bool):
    N = grid.dim
    f0 = eval_f(spec, h0)
    r0 = 1e-8
    y0 = [h0 - f0 * r0 ** 2 / (2.0 * N), -f0 * r0 / N]

    def rhs(r, y):
        return [y[1], -(N - 1) / r * y[1] - eval_f(spec, y[0])]

    kw = dict(method="DOP853", rtol=rtol, atol=rtol * 1e-2)
    if events:
        ev_cross = lambda r, y: y[0]
        ev_cross.terminal = True
        ev_cross.direction = -1
        ev_stall = lambda r, y: y[1]
        ev_stall.terminal = True
        ev_stall.direction = 1
        kw["events"] = [ev_cross, ev_stall]
    else:
        kw["dense_output"] = True
    return solve_ivp(rhs, (r0, grid.r_max), y0, **kw)


def _classify(spec, grid, h0, rtol=1e-10) -> str:
    sol = _integrate_profile(spec, grid, h0, rtol, events=True)
    if sol.t_events[0].size:
        return "cross"
    if sol.t_events[1].size:
        return "stall"
    # reached r_max without crossing or turning; settle by remaining energy
    u_end, v_end = sol.y[0][-1], sol.y[1][-1]
    e_end = 0.5 * v_end ** 2 + eval_F(spec, u_end)
    return "cross" if e_end > 0 else "stall"


def shoot(spec: NonlinearitySpec, grid: RadialGrid, h_max_factor: float = 10.0,
          rtol: float = 1e-10) -> GroundState:
    """Shooting oracle for the scalar ground state.

    Bisects the initial height between decaying-through-zero (overshoot)
    and turning-around (undershoot) until the separatrix profile is pinned
    to machine precision, then samples it on the grid with a linearized
    tail graft.
    """
    rep = check_conditions(spec, grid.dim)
    if not (rep.f1 and rep.f2):
        raise SolverError("shooting requires (f1) and (f2): " + "; ".join(rep.notes))
    if rep.zeta0 is None:
        raise BracketingError(
            "no ground-state bracket: no positive-primitive point found "
            "(condition (f3) failed or scan window too small)")
    zeta0 = rep.zeta0
    h_max = h_max_factor * zeta0
    lo = zeta0 * (1.0 + 1e-9)
    if _classify(spec, grid, lo, rtol) == "cross":
        raise BracketingError("no ground-state bracket: profile at the "
                              "positive-primitive threshold already crosses zero")
    hi = None
    h = max(lo * 1.3, lo + 0.1)
    while True:
        hc = min(h, h_max)
        if _classify(spec, grid, hc, rtol) == "cross":
            hi = hc
            break
        if hc >= h_max:
            break
        h *= 1.3
    if hi is None:
        raise BracketingError(
            f"no ground-state bracket: no crossing height in ({zeta0:.6g}, {h_max:.6g}] "
            "(condition (f3) failure or r_max too small)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _classify(spec, grid, mid, rtol) == "cross":
            hi = mid
        else:
            lo = mid
        if hi - lo <= 4.0 * np.finfo(float).eps * hi:
            break
    h_star = 0.5 * (lo + hi)
    sol = _integrate_profile(spec, grid, h_star, rtol, events=False)
    u = sol.sol(grid.nodes)[0]
    u = _tail_graft(grid, spec, u, level=1e-6 * h_star)
    u[-1] = 0.0
    omega = RadialField(grid, u)
    omega, _ = project_pohozaev(spec, omega)
    omega.values[-1] = 0.0
    _validate_profile(omega)
    return GroundState(
        omega=omega,
        c=energy_J(spec, omega),
        lam=spec.lam,
        pohozaev_residual=pohozaev(spec, omega),
        method="shooting",
        shoot_height=float(h_star),
    )


def _validate_profile(omega: RadialField) -> None:
    v = omega.values
    if np.any(v[:-1] <= 0.0):
        raise SolverError("ground-state profile is not strictly positive inside the domain")
    if np.any(np.diff(v) > 1e-10 * v[0]):
        raise SolverError("ground-state profile is not monotone nonincreasing")


def _scalar_newton(spec: NonlinearitySpec, u: RadialField, tol: float,
                   max_iter: int = 40):
    """Damped Newton on the scalar residual; returns (field, dual, ok)."""
    grid = u.grid
    n = grid.n - 1
    h = grid.h
    af = grid.face_area
    vol = grid.cell_volumes
    low = np.zeros(n)
    upp = np.zeros(n)
    dia0 = np.empty(n)
    dia0[0] = af[0] / (h * vol[0])
    low[1:] = -af[:n - 1] / (h * vol[1:n])
    dia0[1:] = (af[:n - 1] + af[1:n]) / (h * vol[1:n])
    upp[:n - 1] = -af[:n - 1] / (h * vol[:n - 1])
    cur = u.copy()
    dual = _scalar_dual(spec, cur)
    for _ in range(max_iter):
        if dual <= tol:
            return cur, dual, True
        res = _scalar_residual(spec, cur)
        ab = np.zeros((3, n))
        ab[0, 1:] = upp[:n - 1]
        ab[1, :] = dia0 - eval_fprime(spec, cur.values[:n])
        ab[2, :-1] = low[1:]
        try:
            delta = solve_banded((1, 1), ab, -res[:n])
        except np.linalg.LinAlgError:
            return cur, dual, False
        t = 1.0
        while t >= 1e-4:
            trial = cur.values.copy()
            trial[:n] += t * delta
            tf = RadialField(grid, trial)
            d_new = _scalar_dual(spec, tf)
            if d_new < dual * (1.0 - 0.25 * t) or d_new <= tol:
                cur, dual = tf, d_new
                break
            t *= 0.5
        else:
            return cur, dual, False
    return cur, dual, dual <= tol


def manifold_minimize(spec: NonlinearitySpec, grid: RadialGrid,
                      seed: RadialField, tol: float = 1e-7,
                      max_iters: int = 2000) -> GroundState:
    """Ground state as the minimizer of J on the Pohozaev manifold.

    Alternates (a) dilation projection onto {P = 0} and (b) preconditioned
    descent on J with backtracking; switches to damped Newton on the
    unconstrained residual once inside its basin, and finishes with a final
    projection (the returned profile satisfies P = 0 to root tolerance).
    """
    if integrate_values(grid, eval_F(spec, seed.values)) <= 0.0:
        raise SeedError("seed below Pohozaev manifold reach: int F(seed) <= 0")
    u, _ = project_pohozaev(spec, u=seed)
    u.values[-1] = 0.0

    def J_int(w: RadialField) -> float:
        # variational-layer action, exact gradient = scalar residual
        return (0.5 * face_gradient_form(grid, w.values, w.values)
                - volume_integrate(grid, eval_F(spec, w.values)))

    step = 0.5
    newton_gate = 1e-3
    dual = _scalar_dual(spec, u)
    for _ in range(max_iters):
        if dual <= tol:
            break
        if dual <= newton_gate:
            cand, d_new, ok = _scalar_newton(spec, u, tol)
            if ok:
                u, dual = cand, d_new
                break
            newton_gate /= 10.0  # retreat: keep descending before retrying
        res = _scalar_residual(spec, u)
        v, contrib = riesz_representative(grid, spec.lam, res)
        dn = float(np.sqrt(max(contrib, 0.0)))
        direction = v / dn
        J0 = J_int(u)
        accepted = False
        t = step
        while t >= 1e-12:
            trial = RadialField(grid, u.values - t * direction)
            trial.values[-1] = 0.0
            try:
                trial, _ = project_pohozaev(spec, trial)
            except SeedError:
                t *= 0.5
                continue
            trial.values[-1] = 0.0
            if J_int(trial) < J0 - 1e-12 * abs(J0):
                u = trial
                dual = _scalar_dual(spec, u)
                step = min(t * 1.6, 4.0)
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # descent stalled: make a final Newton attempt before failing
            cand, d_new, ok = _scalar_newton(spec, u, tol)
            if ok:
                u, dual = cand, d_new
                break
            raise SolverError(
                f"manifold descent stalled at dual norm {dual:.3e} (tol {tol:.1e})")
    else:
        raise SolverError(
            f"manifold minimization did not converge in {max_iters} iterations "
            f"(dual norm {dual:.3e})")
    omega, _ = project_pohozaev(spec, u)
    omega.values[-1] = 0.0
    _validate_profile(omega)
    return GroundState(
        omega=omega,
        c=energy_J(spec, omega),
        lam=spec.lam,
        pohozaev_residual=pohozaev(spec, omega),
        method="manifold_min",
    )


def default_seed(spec: NonlinearitySpec, grid: RadialGrid) -> RadialField:
    """Deterministic positive bump with int F > 0: height twice the
    positive-primitive threshold, width widened until F-mass is positive."""
    rep = check_conditions(spec, grid.dim)
    if rep.zeta0 is None:
        raise SeedError("cannot build a manifold seed: (f3) not detected")
    # plateau bump: keeps the profile above the positive-primitive threshold
    # on a core whose F-gain beats the small-amplitude shoulder loss
    for height in (2.0 * rep.zeta0, 3.0 * rep.zeta0):
        for width in (1.0, 1.5, 2.0, 3.0):
            vals = height * np.exp(-(grid.nodes / width) ** 4)
            vals[-1] = 0.0
            if integrate_values(grid, eval_F(spec, vals)) > 0.0:
                return RadialField(grid, vals)
    raise SeedError("cannot build a manifold seed with positive F-mass")


def least_energy_set(spec: NonlinearitySpec, grid: RadialGrid,
                     tol: float = 1e-7,
                     agreement_rtol: float = 1e-3) -> GroundState:
    """Run both routes and return the certified representative.

    The manifold result is returned (smoother residual), annotated with the
    shooting energy; disagreement beyond `agreement_rtol` in relative H^1
    aborts (the single-representative convention would be invalid).
    """
    oracle = shoot(spec, grid)
    refined = manifold_minimize(spec, grid, default_seed(spec, grid), tol=tol)
    gap = h1_norm(refined.omega - oracle.omega)
    scale = h1_norm(refined.omega)
    if gap > agreement_rtol * scale:
        raise AmbiguityError(
            "ground-state set ambiguity: shooting and manifold routes differ by "
            f"{gap/scale:.3e} relative H^1 (threshold {agreement_rtol:.1e})")
    refined.c_oracle = oracle.c
    refined.oracle_h1_gap = float(gap)
    refined.shoot_height = oracle.shoot_height
    return refined
