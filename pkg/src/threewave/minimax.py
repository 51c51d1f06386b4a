"""Dilation-path boxes, level bounds, and critical-point extraction.

Branch X searches near the product of three scalar ground states; branch Y
near (omega_1, omega_2, 0).  The box carries the dilation paths
sigma_i(s) = omega_i(e^{-s} .), the sampled energy surface gives the upper
level d_alpha and the boundary gap, and critical points are extracted by
normalized preconditioned descent restricted to the 2*mu neighborhood,
optionally polished by damped Newton with the analytic Jacobian.

For alpha < 0 the solvers work in the mirrored frame u3 -> -u3 (an exact
symmetry of the system for odd f_3) and flip the third component back on
return.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .functionals import (SolverError, SystemSpec, action, dual_norm, energy_J,
                          gradient_state, pohozaev, residual, triple_product)
from .ground import GroundState
from .nonlinearity import eval_fprime
from .radial import (RadialField, RadialGrid, VectorState, dilate, h1_distance,
                     h1_norm, zeros)


class GeometryError(SolverError):
    """Linking geometry could not be certified."""


class NeighborhoodError(SolverError):
    """Descent left the working neighborhood."""


class CollapseError(SolverError):
    """A Y-branch solve collapsed to the semitrivial state."""


@dataclass
class PathBox:
    """Sampled dilation box around a product of ground states.

    kind "X_box": three grounds, box [-r, r]^3; kind "Y_box": two grounds
    with a frozen zero third component, box [-l, l]^2.
    """

    kind: str
    grounds: tuple
    half_width: float
    mu: float
    samples_per_axis: int = 9

    def __post_init__(self):
        k = 3 if self.kind == "X_box" else 2
        if len(self.grounds) != k:
            raise ValueError(f"{self.kind} spans {k} ground states")
        if self.samples_per_axis < 9:
            raise ValueError("need at least 9 samples per axis")
        norms = [h1_norm(g.omega) for g in self.grounds]
        if not self.mu < min(norms) / 3.0:
            raise ValueError(
                f"mu={self.mu:.4g} must stay below one third of the smallest "
                f"ground-state norm {min(norms):.4g}")

    @property
    def naxes(self) -> int:
        return 3 if self.kind == "X_box" else 2

    @property
    def grid(self) -> RadialGrid:
        return self.grounds[0].grid

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.samples_per_axis)

    def representative(self, third_sign: float = 1.0) -> VectorState:
        """Product-set representative used for distance monitoring."""
        if self.kind == "X_box":
            u1, u2, u3 = (g.omega.copy() for g in self.grounds)
            return VectorState((u1, u2, third_sign * u3))
        u1, u2 = (g.omega.copy() for g in self.grounds)
        return VectorState((u1, u2, zeros(self.grid)))

    def dist_to_product(self, state: VectorState, third_sign: float = 1.0) -> float:
        return h1_distance(state, self.representative(third_sign))

    def path_state(self, svec, third_sign: float = 1.0) -> VectorState:
        """sigma-vec(s) for X, tau-vec(r) for Y (third component zero)."""
        if self.kind == "X_box":
            s1, s2, s3 = svec
            return VectorState((
                sigma_path(self.grounds[0], s1),
                sigma_path(self.grounds[1], s2),
                third_sign * sigma_path(self.grounds[2], s3)))
        r1, r2 = svec
        return VectorState((
            sigma_path(self.grounds[0], r1),
            sigma_path(self.grounds[1], r2),
            zeros(self.grid)))


def sigma_path(gs: GroundState, s: float) -> RadialField:
    """Dilation path through the ground state; positive for all s."""
    return dilate(gs.omega, s)


def _auto_half_width(grounds, mu: float, margin: float = 0.9) -> float:
    """Largest half-width whose sampled paths stay within margin*mu of the
    product representative (componentwise budget mu/sqrt(k))."""
    k = len(grounds)
    budget = margin * mu / np.sqrt(k)
    best = np.inf
    for g in grounds:
        for sign in (+1.0, -1.0):
            fn = lambda s: h1_norm(dilate(g.omega, sign * s) - g.omega) - budget
            hi = 0.05
            while fn(hi) < 0 and hi < 2.0:
                hi *= 1.5
            s_edge = brentq(fn, 0.0, min(hi, 2.0), xtol=1e-10) if fn(min(hi, 2.0)) >= 0 else min(hi, 2.0)
            best = min(best, s_edge)
    return float(best)


def make_box(kind: str, grounds, mu_factor: float = 0.3,
             half_width: float | None = None, samples_per_axis: int = 9,
             j3_check=None) -> PathBox:
    """Construct a path box with the spec defaults.

    mu = mu_factor * min ||omega_i||_H1; half_width auto-sized so the
    sampled paths stay inside the mu-neighborhood with 10% margin.
    For Y boxes pass `j3_check`, the scalar action of species 3, which is
    spot-checked to be nonnegative on the ball of radius 2*mu.
    """
    grounds = tuple(grounds)
    norms = [h1_norm(g.omega) for g in grounds]
    mu = mu_factor * min(norms)
    if half_width is None:
        half_width = _auto_half_width(grounds, mu)
    box = PathBox(kind=kind, grounds=grounds, half_width=half_width,
                  mu=mu, samples_per_axis=samples_per_axis)
    # verify the worst sampled corner stays inside the mu-neighborhood
    worst_sq = 0.0
    for g in grounds:
        worst_sq += max(h1_norm(dilate(g.omega, s) - g.omega)
                        for s in (-half_width, half_width)) ** 2
    if np.sqrt(worst_sq) > mu * (1 + 1e-9):
        raise GeometryError("sampled paths leave the mu-neighborhood; shrink half_width")
    if kind == "Y_box":
        if j3_check is None:
            raise ValueError("Y_box construction requires the species-3 action for the spot check")
        grid = grounds[0].grid
        bump = RadialField(grid, np.exp(-grid.nodes ** 2 / 2.0))
        bump.values[-1] = 0.0
        for scale_w in (0.5, 1.0, 2.0):
            probe = dilate(bump, np.log(scale_w)) if scale_w != 1.0 else bump.copy()
            nrm = h1_norm(probe)
            for t in (0.25, 0.5, 0.75, 1.0):
                cand = RadialField(grid, probe.values * (t * 2.0 * mu / nrm))
                if j3_check(cand) < 0.0:
                    raise GeometryError(
                        "species-3 action is negative inside the 2*mu ball; "
                        "reduce mu_factor for the Y geometry")
    return box


@dataclass
class BoxSurface:
    """Sampled energy surface over a path box."""

    box: PathBox
    axes: np.ndarray
    I_values: np.ndarray
    triple_values: np.ndarray | None
    d_alpha: float
    maximizer: tuple
    boundary_max: float
    D: float

    def rows(self):
        """Flattened (s..., I) rows for CSV export."""
        idx = np.ndindex(*self.I_values.shape)
        for ind in idx:
            yield tuple(self.axes[list(ind)]) + (self.I_values[ind],)


def box_energy_surface(sys: SystemSpec, box: PathBox) -> BoxSurface:
    """Sample I_alpha over the path box.

    X boxes: I = sum_i J_i(sigma_i(s_i)) - alpha * triple; Y boxes collapse
    exactly to J_1 + J_2 (zero third component kills the coupling).
    """
    axes = box.axis
    ns = box.samples_per_axis
    grid = box.grid
    third_sign = -1.0 if (box.kind == "X_box" and sys.alpha < 0) else 1.0
    dil = []
    for g in box.grounds:
        dil.append([dilate(g.omega, s) for s in axes])
    J = []
    for i, g in enumerate(box.grounds):
        J.append(np.array([energy_J(sys.specs[i], u) for u in dil[i]]))
    if box.kind == "Y_box":
        I2 = J[0][:, None] + J[1][None, :]
        interior = np.zeros_like(I2, dtype=bool)
        interior[1:-1, 1:-1] = True
        bmax = float(I2[~interior].max())
        kmax = np.unravel_index(int(np.argmax(I2)), I2.shape)
        return BoxSurface(box=box, axes=axes, I_values=I2, triple_values=None,
                          d_alpha=float(I2.max()), maximizer=tuple(axes[list(kmax)]),
                          boundary_max=bmax, D=0.0)
    mass = grid.trap_mass * grid.sphere_area
    M1 = np.stack([u.values * mass for u in dil[0]])
    M2 = np.stack([u.values for u in dil[1]])
    M3 = np.stack([third_sign * u.values for u in dil[2]])
    T = np.einsum("an,bn,cn->abc", M1, M2, M3)
    I3 = (J[0][:, None, None] + J[1][None, :, None] + J[2][None, None, :]
          - sys.alpha * T)
    interior = np.zeros_like(I3, dtype=bool)
    interior[1:-1, 1:-1, 1:-1] = True
    bmax = float(I3[~interior].max())
    kmax = np.unravel_index(int(np.argmax(I3)), I3.shape)
    return BoxSurface(box=box, axes=axes, I_values=I3, triple_values=T,
                      d_alpha=float(I3.max()), maximizer=tuple(axes[list(kmax)]),
                      boundary_max=bmax, D=float(np.max(np.abs(T))))


def boundary_gap(sys: SystemSpec, box: PathBox) -> float:
    """sum c_i - max I_alpha on the box boundary; positive certifies the
    linking geometry at this alpha."""
    surf = box_energy_surface(sys, box)
    levels = sum(g.c for g in box.grounds)
    return levels - surf.boundary_max


def pohozaev_zero_find(sys: SystemSpec, box: PathBox, gamma,
                       tol_factor: float = 1e-6) -> np.ndarray:
    """Certified zero of Phi(s) = (P_i(gamma_i(s)))_i inside the box.

    gamma maps a box point to a VectorState and must agree with the
    dilation paths on the boundary.  Per-axis sign bracketing along the
    axes gives the starting point; damped Newton with a finite-difference
    Jacobian certifies |Phi|_inf <= tol_factor * max_i ||grad omega_i||^2.
    """
    k = box.naxes
    w = box.half_width
    scale = max(g.gradient_sq() for g in box.grounds)
    tol = tol_factor * scale

    def phi(svec):
        st = gamma(svec)
        return np.array([pohozaev(sys.specs[i], st[i]) for i in range(k)])

    s0 = np.zeros(k)
    for i in range(k):
        def comp(t):
            v = np.zeros(k)
            v[i] = t
            return phi(v)[i]
        lo, hi = -w, w
        flo, fhi = comp(lo), comp(hi)
        if not (flo > 0 > fhi):
            raise GeometryError(
                "pohozaev zero not certified: no sign change along axis "
                f"{i+1} (box too small or geometry violated)")
        s0[i] = brentq(comp, lo, hi, xtol=1e-12)
    s = s0.copy()
    f0 = phi(s)
    for _ in range(60):
        if np.max(np.abs(f0)) <= tol:
            return s
        # finite-difference Jacobian
        Jm = np.empty((k, k))
        dstep = 1e-6 * max(w, 1e-3)
        for j in range(k):
            sp_ = s.copy()
            sp_[j] += dstep
            Jm[:, j] = (phi(sp_) - f0) / dstep
        try:
            delta = np.linalg.solve(Jm, -f0)
        except np.linalg.LinAlgError as exc:
            raise GeometryError(f"pohozaev zero not certified: singular Jacobian ({exc})")
        t = 1.0
        while t >= 1e-6:
            cand = np.clip(s + t * delta, -w, w)
            fc = phi(cand)
            if np.max(np.abs(fc)) < np.max(np.abs(f0)):
                s, f0 = cand, fc
                break
            t *= 0.5
        else:
            raise GeometryError(
                f"pohozaev zero not certified: Newton stagnated at |Phi|={np.max(np.abs(f0)):.3e}")
    raise GeometryError(
        f"pohozaev zero not certified: no convergence, |Phi|={np.max(np.abs(f0)):.3e}")


@dataclass
class DescentResult:
    state: VectorState
    dual_norm: float
    I_value: float
    iterations: int
    stayed_in_neighborhood: bool
    exit_reason: str
    path_length: float = 0.0
    trace: list = field(default_factory=list)


def descend(sys: SystemSpec, box: PathBox | None, start: VectorState,
            tol: float = 1e-6, max_iters: int = 2000, strict: bool = True,
            third_sign: float = 1.0, keep_trace: bool = False,
            newton_tol: float | None = None) -> DescentResult:
    """Normalized preconditioned descent with backtracking line search.

    Iterates state <- state - step * G/||G|| with G the lambda-Riesz
    representative of the residual (so ||G||_H equals the dual norm), under
    an Armijo decrease condition on the discrete action.  Monitors the
    distance to the box product set each iteration; in strict mode leaving
    the 2*mu neighborhood stops the descent.

    The sought critical points are saddles, so the flow only passes near
    them; with `newton_tol` set, Newton extraction is attempted whenever
    the dual norm reaches a new low, and an endpoint that converges inside
    the neighborhood finishes the descent (exit_reason "converged").
    """
    state = start.copy()
    n_last = state.grid.n - 1
    stayed = True
    path_len = 0.0
    step = 0.25
    trace = []
    it = 0
    exit_reason = "max_iters"
    newton_gate = np.inf
    for it in range(max_iters + 1):
        res, G, dual = gradient_state(sys, state)
        dist = box.dist_to_product(state, third_sign) if box is not None else 0.0
        if keep_trace:
            trace.append((it, action(sys, state), dual, dist))
        if box is not None and dist > 2.0 * box.mu:
            stayed = False
            if strict:
                exit_reason = "left_neighborhood"
                break
        if dual <= tol:
            exit_reason = "converged"
            break
        if newton_tol is not None and dual <= newton_gate:
            nr = newton_refine(sys, state, tol=newton_tol)
            if nr.converged:
                nd = box.dist_to_product(nr.state, third_sign) if box is not None else 0.0
                if box is None or nd <= 2.0 * box.mu:
                    state, dual = nr.state, nr.dual_norm
                    exit_reason = "converged"
                    if keep_trace:
                        trace.append((it + nr.iterations, action(sys, state), dual, nd))
                    break
            newton_gate = dual / 1.5  # retry once the descent makes progress
        if it == max_iters:
            break
        A0 = action(sys, state)
        direction = [g.values / dual for g in G]
        t = step
        accepted = False
        while t >= 1e-13:
            cand_vals = []
            for u, d in zip(state, direction):
                v = u.values - t * d
                v[n_last] = 0.0
                cand_vals.append(v)
            cand = VectorState(tuple(RadialField(state.grid, v) for v in cand_vals))
            if action(sys, cand) <= A0 - 1e-4 * t * dual:
                state = cand
                path_len += t
                step = min(t * 1.7, 2.0)
                accepted = True
                break
            t *= 0.5
        if not accepted:
            exit_reason = "max_iters"  # line search floor: no decrease available
            break
    I_val = _reported_I(sys, state)
    if exit_reason == "converged" and not stayed and strict:
        exit_reason = "left_neighborhood"
    return DescentResult(state=state, dual_norm=dual, I_value=I_val,
                         iterations=it, stayed_in_neighborhood=stayed,
                         exit_reason=exit_reason, path_length=path_len,
                         trace=trace)


def _reported_I(sys: SystemSpec, state: VectorState) -> float:
    Js = [energy_J(sp, u) for sp, u in zip(sys.specs, state)]
    return Js[0] + Js[1] + Js[2] - sys.alpha * triple_product(state)


@dataclass
class NewtonResult:
    state: VectorState
    dual_norm: float
    iterations: int
    converged: bool


def _system_jacobian(sys: SystemSpec, state: VectorState):
    """Sparse Jacobian of the residual map on interior nodes (3 blocks)."""
    grid = sys.grid
    n = grid.n - 1
    h = grid.h
    af = grid.face_area
    vol = grid.cell_volumes
    low = np.zeros(n)
    upp = np.zeros(n)
    dia = np.empty(n)
    dia[0] = af[0] / (h * vol[0])
    low[1:] = -af[:n - 1] / (h * vol[1:n])
    dia[1:] = (af[:n - 1] + af[1:n]) / (h * vol[1:n])
    upp[:n - 1] = -af[:n - 1] / (h * vol[:n - 1])
    L = sp.diags([low[1:], dia, upp[:n - 1]], [-1, 0, 1], format="csr")
    a = sys.alpha
    u1, u2, u3 = (u.values[:n] for u in state)
    D = [sp.diags(eval_fprime(sp_, uv)) for sp_, uv in zip(sys.specs, (u1, u2, u3))]
    C1 = sp.diags(a * u1)
    C2 = sp.diags(a * u2)
    C3 = sp.diags(a * u3)
    return sp.vstack([
        sp.hstack([L - D[0], -C3, -C2]),
        sp.hstack([-C3, L - D[1], -C1]),
        sp.hstack([-C2, -C1, L - D[2]]),
    ]).tocsc()


def newton_refine(sys: SystemSpec, state: VectorState, tol: float = 1e-10,
                  max_iters: int = 30) -> NewtonResult:
    """Damped Newton on the full residual with the analytic Jacobian.

    Diagonal blocks -Delta - f_i'(u_i), off-diagonal couplings -alpha u_k.
    Quadratic near nondegenerate solutions; on divergence or a singular
    Jacobian returns the input with converged=False (caller may fall back
    to descent).
    """
    grid = sys.grid
    n = grid.n - 1
    cur = state.copy()
    dual = dual_norm(sys, residual(sys, cur))
    if not np.isfinite(dual):
        return NewtonResult(state=state, dual_norm=np.inf, iterations=0, converged=False)
    for it in range(max_iters):
        if dual <= tol:
            return NewtonResult(state=cur, dual_norm=dual, iterations=it, converged=True)
        res = residual(sys, cur)
        rhs = -np.concatenate([r.values[:n] for r in res])
        try:
            J = _system_jacobian(sys, cur)
            delta = spla.spsolve(J, rhs)
        except Exception:
            return NewtonResult(state=state, dual_norm=dual, iterations=it, converged=False)
        if not np.all(np.isfinite(delta)):
            return NewtonResult(state=state, dual_norm=dual, iterations=it, converged=False)
        t = 1.0
        improved = False
        while t >= 1e-4:
            cand_fields = []
            for i, u in enumerate(cur):
                v = u.values.copy()
                v[:n] += t * delta[i * n:(i + 1) * n]
                v[-1] = 0.0
                cand_fields.append(RadialField(grid, v))
            cand = VectorState(tuple(cand_fields))
            d_new = dual_norm(sys, residual(sys, cand))
            if d_new < dual * (1.0 - 0.25 * t) or d_new <= tol:
                cur, dual = cand, d_new
                improved = True
                break
            t *= 0.5
        if not improved:
            return NewtonResult(state=state, dual_norm=dual, iterations=it, converged=False)
    return NewtonResult(state=cur, dual_norm=dual, iterations=max_iters,
                        converged=dual <= tol)


def _mirror(state: VectorState) -> VectorState:
    u1, u2, u3 = state
    return VectorState((u1.copy(), u2.copy(), -1.0 * u3))


def solve_branch_X(sys: SystemSpec, box: PathBox, tol: float = 1e-6,
                   max_iters: int = 2000, keep_trace: bool = False) -> DescentResult:
    """Vector solution near the full product of ground states.

    Runs the energy surface, descends from the box maximizer inside the
    2*mu neighborhood, and asserts the endpoint is in the mu-neighborhood
    with I <= d_alpha.  For alpha < 0 the mirrored problem (u3 -> -u3) is
    solved and the result flipped back.
    """
    if box.kind != "X_box":
        raise ValueError("solve_branch_X needs an X_box")
    if sys.alpha < 0:
        mirrored = solve_branch_X(sys.with_alpha(-sys.alpha), box, tol=tol,
                                  max_iters=max_iters, keep_trace=keep_trace)
        mirrored.state = _mirror(mirrored.state)
        mirrored.I_value = _reported_I(sys, mirrored.state)
        return mirrored
    gap = boundary_gap(sys, box)
    if gap <= 0:
        raise GeometryError(
            f"linking geometry not certified: boundary gap {gap:.3e} <= 0 at alpha={sys.alpha}")
    surf = box_energy_surface(sys, box)
    start = box.path_state(surf.maximizer)
    result = descend(sys, box, start, tol=tol, max_iters=max_iters,
                     strict=True, keep_trace=keep_trace, newton_tol=tol)
    if result.exit_reason != "converged":
        raise NeighborhoodError(
            f"branch-X descent failed at alpha={sys.alpha}: {result.exit_reason} "
            f"after {result.iterations} iterations, dual={result.dual_norm:.3e}, "
            f"dist={box.dist_to_product(result.state):.3f} (alpha too large for this geometry)")
    dist = box.dist_to_product(result.state)
    if dist > box.mu:
        raise NeighborhoodError(
            f"branch-X endpoint outside the mu-neighborhood: dist={dist:.3f} > mu={box.mu:.3f}")
    if result.I_value > surf.d_alpha + 1e-9 * (1 + abs(surf.d_alpha)):
        raise SolverError(
            f"branch-X endpoint above the box level: I={result.I_value:.8f} > d={surf.d_alpha:.8f}")
    return result


def default_kick(grid: RadialGrid) -> RadialField:
    """Fixed positive unit bump used to break the zero third component."""
    vals = np.exp(-grid.nodes ** 2 / 2.0)
    vals[-1] = 0.0
    phi = RadialField(grid, vals)
    return (1.0 / h1_norm(phi)) * phi


def solve_branch_Y(sys: SystemSpec, box: PathBox, tol: float = 1e-6,
                   max_iters: int = 2000, epsilon_kick: float = 1e-3,
                   keep_trace: bool = False) -> DescentResult:
    """Vector solution near (omega_1, omega_2, 0).

    Starts at the tau-path maximizer with the third component seeded by
    sign(alpha) * epsilon_kick * bump, descends in the Y geometry, asserts
    the endpoint has a genuinely nonzero third component (threshold
    10*tol), and that it stays in the mu-neighborhood of Y.
    """
    if box.kind != "Y_box":
        raise ValueError("solve_branch_Y needs a Y_box")
    surf = box_energy_surface(sys, box)
    start = box.path_state(surf.maximizer)
    kick_sign = -1.0 if sys.alpha < 0 else 1.0
    phi = default_kick(box.grid)
    start = VectorState((start[0], start[1], (kick_sign * epsilon_kick) * phi))
    result = descend(sys, box, start, tol=tol, max_iters=max_iters,
                     strict=True, keep_trace=keep_trace, newton_tol=tol)
    if result.exit_reason != "converged":
        raise NeighborhoodError(
            f"branch-Y descent failed at alpha={sys.alpha}: {result.exit_reason} "
            f"after {result.iterations} iterations, dual={result.dual_norm:.3e}")
    dist = box.dist_to_product(result.state)
    if dist > box.mu:
        raise NeighborhoodError(
            f"branch-Y endpoint outside the mu-neighborhood: dist={dist:.3f} > mu={box.mu:.3f}")
    third = h1_norm(result.state[2])
    if third <= 10.0 * tol:
        raise CollapseError(
            f"collapsed to semitrivial: ||u3||_H1={third:.3e} <= 10*tol at alpha={sys.alpha} "
            "(a true vector critical point has a nonvanishing third component)")
    return result
