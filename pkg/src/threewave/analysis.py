"""Coupling-strength continuation and asymptotic-structure probes.

`sweep` continues a branch along a descending list of couplings with warm
starts, recording distances to the limit products

    X = S1 x S2 x S3,   Y = S1 x S2 x {0},   Z = S1 x {0} x {0}

(single-representative convention).  `nonexistence_probe` drives Newton
from near-scalar seeds (omega_1, eps*phi, +-eps*phi) and checks the
coupled-norm dichotomy: endpoints either collapse to the scalar solution
or carry a coupled norm bounded away from zero; the annulus in between is
forbidden.  `be_system_probe` runs the same protocol against the
Bose-Einstein-type cubic coupling, where the per-component dichotomy holds
and no analogue of the Y branch exists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .functionals import (SolverError, SystemSpec, dual_norm, energy_J,
                          residual, triple_product)
from .ground import GroundState
from .minimax import (CollapseError, DescentResult, PathBox, box_energy_surface,
                      default_kick, descend, newton_refine, solve_branch_X,
                      solve_branch_Y)
from .nonlinearity import NonlinearitySpec, eval_f, eval_fprime
from .radial import (RadialField, RadialGrid, VectorState, dilate, h1_distance,
                     h1_norm, inner_lambda, integrate_values, laplacian_apply,
                     lambda_norm, zeros)


class DichotomyViolation(SolverError):
    """A converged vector endpoint fell below the predicted coupled-norm
    lower bound (implementation bug or constant misestimate)."""


@dataclass
class BranchRecord:
    alpha: float
    state: VectorState
    dual_norm: float
    I_value: float
    dist_X: float | None
    dist_Y: float
    dist_Z: float
    component_norms: tuple  # three (||u||_lambda, ||u||_H1) pairs


@dataclass
class SweepResult:
    branch: str
    records: list
    failed_alpha: float | None = None
    error: str | None = None


@dataclass
class ProbeAttempt:
    seed_label: str
    outcome: str  # "scalar_collapse" | "vector_found"
    coupled_norm_sq: float
    component_lambda_sq: tuple
    eps: float = 0.0
    sign: float = 1.0


@dataclass
class ProbeReport:
    alpha: float
    attempts: list
    rho_empirical: float
    rho_paper: float
    sobolev_constant: float
    alpha_window: float
    collapse_threshold: float


def dist_to_limit_sets(state: VectorState, grounds) -> tuple:
    """(dist_X, dist_Y, dist_Z) to the single-representative products.

    `grounds` holds the per-species GroundStates; species 3 may be None
    (no (f3) ground state), in which case dist_X is None.
    """
    g1, g2, g3 = grounds
    zero = zeros(state.grid)
    dist_X = None
    if g3 is not None and g2 is not None:
        dist_X = h1_distance(state, VectorState((g1.omega.copy(), g2.omega.copy(),
                                                 g3.omega.copy())))
    if g2 is not None:
        dist_Y = h1_distance(state, VectorState((g1.omega.copy(), g2.omega.copy(),
                                                 zero.copy())))
    else:
        dist_Y = math.nan
    dist_Z = h1_distance(state, VectorState((g1.omega.copy(), zero.copy(), zero.copy())))
    return dist_X, dist_Y, dist_Z


def _record(sys: SystemSpec, state: VectorState, grounds, dual: float) -> BranchRecord:
    Js = [energy_J(sp_, u) for sp_, u in zip(sys.specs, state)]
    I = Js[0] + Js[1] + Js[2] - sys.alpha * triple_product(state)
    dX, dY, dZ = dist_to_limit_sets(state, grounds)
    comps = tuple((lambda_norm(u, sp_.lam), h1_norm(u))
                  for u, sp_ in zip(state, sys.specs))
    return BranchRecord(alpha=sys.alpha, state=state, dual_norm=dual, I_value=I,
                        dist_X=dX, dist_Y=dY, dist_Z=dZ, component_norms=comps)


def _solve_from_box(sys: SystemSpec, box: PathBox, branch: str, tol: float,
                    epsilon_kick: float, max_iters: int = 2000) -> DescentResult:
    """Box start + soft-neighborhood descent with Newton extraction.

    Unlike the strict branch solvers, neighborhood excursions are recorded
    rather than fatal (the sweep contract requires a solution at every
    listed coupling; the excursion shows up in stayed_in_neighborhood).
    """
    surf = box_energy_surface(sys, box)
    start = box.path_state(surf.maximizer,
                           third_sign=-1.0 if (box.kind == "X_box" and sys.alpha < 0) else 1.0)
    if branch == "Y":
        kick_sign = -1.0 if sys.alpha < 0 else 1.0
        start = VectorState((start[0], start[1],
                             (kick_sign * epsilon_kick) * default_kick(box.grid)))
    result = descend(sys, box, start, tol=tol, max_iters=max_iters,
                     strict=False, newton_tol=tol,
                     third_sign=-1.0 if (box.kind == "X_box" and sys.alpha < 0) else 1.0)
    if result.exit_reason != "converged":
        raise SolverError(
            f"branch-{branch} cold solve failed at alpha={sys.alpha}: "
            f"{result.exit_reason}, dual={result.dual_norm:.3e}")
    return result


def sweep(sys_template: SystemSpec, box: PathBox, alphas, branch: str,
          tol: float = 1e-8, epsilon_kick: float = 1e-3,
          ground3: GroundState | None = None) -> SweepResult:
    """Continue a branch along strictly decreasing positive couplings.

    The largest coupling is solved from the box start; each subsequent one
    warm-starts from the previous solution (re-kicking the third component
    if it has degenerated on the Y branch).  A solve failure aborts the
    sweep at that coupling and returns the partial records.
    """
    alphas = [float(a) for a in alphas]
    if not all(x > y for x, y in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly decreasing")
    if branch not in ("X", "Y"):
        raise ValueError(f"unknown branch tag {branch!r}")
    if any(a <= 0 for a in alphas):
        raise ValueError("alphas must be positive")
    if branch == "X":
        grounds = (box.grounds[0], box.grounds[1], box.grounds[2])
    else:
        grounds = (box.grounds[0], box.grounds[1], ground3)
    records = []
    state = None
    for k, a in enumerate(alphas):
        sys_a = sys_template.with_alpha(a)
        try:
            if k == 0:
                res = _solve_from_box(sys_a, box, branch, tol, epsilon_kick)
                state = res.state
                dual = res.dual_norm
            else:
                if branch == "Y" and h1_norm(state[2]) <= 10.0 * tol:
                    state = VectorState((state[0], state[1],
                                         state[2] + epsilon_kick * default_kick(box.grid)))
                nr = newton_refine(sys_a, state, tol=tol)
                if not nr.converged:
                    res = descend(sys_a, box, state, tol=tol, max_iters=2000,
                                  strict=False, newton_tol=tol)
                    if res.exit_reason != "converged":
                        raise SolverError(
                            f"warm-start solve failed at alpha={a}: {res.exit_reason}")
                    state, dual = res.state, res.dual_norm
                else:
                    state, dual = nr.state, nr.dual_norm
            if branch == "Y":
                third = h1_norm(state[2])
                if third <= 10.0 * tol:
                    raise CollapseError(
                        f"collapsed to semitrivial at alpha={a}: ||u3||={third:.3e}")
            records.append(_record(sys_a, state, grounds, dual))
        except SolverError as exc:
            return SweepResult(branch=branch, records=records,
                               failed_alpha=a, error=str(exc))
    return SweepResult(branch=branch, records=records)


def sobolev_constant_estimate(grid: RadialGrid, lam: float,
                              extra_fields=()) -> float:
    """Probe-family lower bound on the embedding constant C' with

        ||u||_{L^{2*}}^{2*} <= C' ||u||_lambda^{2*},
        ||u||_{L^3}^3      <= C' ||u||_lambda^3.

    The probe family is Gaussians over a width sweep plus any caller
    supplied fields (e.g. dilated ground states); the returned value is the
    max of the two quotients over the family, a lower bound on the true
    best constant (reported as such).
    """
    N = grid.dim
    two_star = 2.0 * N / (N - 2.0)
    best = 0.0
    probes = [RadialField(grid, np.exp(-grid.nodes ** 2 / (2.0 * w ** 2)))
              for w in np.geomspace(0.4, 6.0, 12)]
    probes.extend(extra_fields)
    for u in probes:
        u = u.copy()
        u.values[-1] = 0.0
        nl = lambda_norm(u, lam)
        if nl <= 0:
            continue
        l2s = integrate_values(grid, np.abs(u.values) ** two_star)
        l3 = integrate_values(grid, np.abs(u.values) ** 3)
        best = max(best, l2s / nl ** two_star, l3 / nl ** 3)
    return best


def _probe_solve(sys: SystemSpec, seed: VectorState, tol: float):
    nr = newton_refine(sys, seed, tol=tol, max_iters=60)
    if nr.converged:
        return nr.state, nr.dual_norm
    res = descend(sys, None, seed, tol=1e-3, max_iters=400, newton_tol=tol)
    if res.exit_reason == "converged" and res.dual_norm <= tol:
        return res.state, res.dual_norm
    raise SolverError(
        f"probe attempt did not converge at alpha={sys.alpha} "
        f"(dual={min(nr.dual_norm, res.dual_norm):.3e})")


def nonexistence_probe(sys: SystemSpec, grounds, epsilons, tol: float = 1e-8,
                       collapse_factor: float = 100.0) -> ProbeReport:
    """Probe for solutions near Z = S1 x {0} x {0}.

    For each eps, Newton runs from (omega_1, eps*phi, +-eps*phi).  Endpoints
    are classified scalar_collapse (coupled norm <= collapse_factor*tol^2)
    or vector_found; the coupled norm ||u2||^2_{l2} + ||u3||^2_{l3} of every
    vector endpoint must clear the reference bound rho_paper derived from
    the embedding-constant estimate, else the run fails loudly.
    """
    g1 = grounds[0]
    grid = sys.grid
    phi = default_kick(grid)
    lam2, lam3 = sys.lambdas[1], sys.lambdas[2]
    dilated = [dilate(g1.omega, s) for s in (-0.3, 0.0, 0.3)]
    cprime = max(sobolev_constant_estimate(grid, lam2, dilated),
                 sobolev_constant_estimate(grid, lam3, dilated))
    N = grid.dim
    two_star = 2.0 * N / (N - 2.0)
    rho_paper = (2.0 * cprime) ** (-2.0 / (two_star - 2.0))
    M = g1.h1_norm() + 1.0
    alpha_window = 1.0 / (2.0 * cprime * M)
    attempts = []
    rho_emp = math.inf
    threshold = collapse_factor * tol * tol
    for eps in epsilons:
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            seed = VectorState((g1.omega.copy(), eps * phi, (sign * eps) * phi))
            endpoint, _ = _probe_solve(sys, seed, tol)
            n2 = inner_lambda(endpoint[1], endpoint[1], lam2)
            n3 = inner_lambda(endpoint[2], endpoint[2], lam3)
            coupled = n2 + n3
            outcome = "scalar_collapse" if coupled <= threshold else "vector_found"
            if outcome == "vector_found":
                rho_emp = min(rho_emp, coupled)
            attempts.append(ProbeAttempt(
                seed_label=f"eps={eps:g}{tag}", outcome=outcome,
                coupled_norm_sq=coupled,
                component_lambda_sq=(
                    inner_lambda(endpoint[0], endpoint[0], sys.lambdas[0]), n2, n3),
                eps=float(eps), sign=sign))
    for at in attempts:
        if at.outcome == "vector_found" and at.coupled_norm_sq < rho_paper:
            raise DichotomyViolation(
                "coupled-norm dichotomy violation: converged vector endpoint "
                f"({at.seed_label}) has coupled norm {at.coupled_norm_sq:.3e} below "
                f"the predicted lower bound {rho_paper:.3e}")
    return ProbeReport(alpha=sys.alpha, attempts=attempts, rho_empirical=rho_emp,
                       rho_paper=rho_paper, sobolev_constant=cprime,
                       alpha_window=alpha_window, collapse_threshold=threshold)


# ---------------------------------------------------------------------------
# Bose-Einstein-type coupled system (cubic couplings beta_ij u_i u_j^2)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BESystem:
    """System with Bose-Einstein couplings:

    -Delta u1 = f1(u1) + b12 u1 u2^2 + b13 u1 u3^2, and cyclic analogues.
    The zero set of any single component is an invariant subspace.
    """

    specs: tuple
    betas: tuple  # (b12, b13, b23)
    grid: RadialGrid

    @property
    def lambdas(self):
        return tuple(sp_.lam for sp_ in self.specs)


def be_residual(sys: BESystem, state: VectorState) -> VectorState:
    u1, u2, u3 = state
    b12, b13, b23 = sys.betas
    r1 = (-laplacian_apply(u1).values - eval_f(sys.specs[0], u1.values)
          - u1.values * (b12 * u2.values ** 2 + b13 * u3.values ** 2))
    r2 = (-laplacian_apply(u2).values - eval_f(sys.specs[1], u2.values)
          - u2.values * (b12 * u1.values ** 2 + b23 * u3.values ** 2))
    r3 = (-laplacian_apply(u3).values - eval_f(sys.specs[2], u3.values)
          - u3.values * (b13 * u1.values ** 2 + b23 * u2.values ** 2))
    g = state.grid
    return VectorState((RadialField(g, r1), RadialField(g, r2), RadialField(g, r3)))


def be_dual_norm(sys: BESystem, res: VectorState) -> float:
    from .functionals import riesz_representative
    total = 0.0
    for lam, r in zip(sys.lambdas, res):
        _, contrib = riesz_representative(sys.grid, lam, r.values)
        total += contrib
    return float(np.sqrt(max(total, 0.0)))


def _be_jacobian(sys: BESystem, state: VectorState):
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
    b12, b13, b23 = sys.betas
    u1, u2, u3 = (u.values[:n] for u in state)
    D1 = sp.diags(eval_fprime(sys.specs[0], u1) + b12 * u2 ** 2 + b13 * u3 ** 2)
    D2 = sp.diags(eval_fprime(sys.specs[1], u2) + b12 * u1 ** 2 + b23 * u3 ** 2)
    D3 = sp.diags(eval_fprime(sys.specs[2], u3) + b13 * u1 ** 2 + b23 * u2 ** 2)
    C12 = sp.diags(2.0 * b12 * u1 * u2)
    C13 = sp.diags(2.0 * b13 * u1 * u3)
    C23 = sp.diags(2.0 * b23 * u2 * u3)
    return sp.vstack([
        sp.hstack([L - D1, -C12, -C13]),
        sp.hstack([-C12, L - D2, -C23]),
        sp.hstack([-C13, -C23, L - D3]),
    ]).tocsc()


def be_newton(sys: BESystem, state: VectorState, tol: float = 1e-10,
              max_iters: int = 60):
    """Damped Newton for the BE system; returns (state, dual, converged)."""
    grid = sys.grid
    n = grid.n - 1
    cur = state.copy()
    dual = be_dual_norm(sys, be_residual(sys, cur))
    for _ in range(max_iters):
        if dual <= tol:
            return cur, dual, True
        res = be_residual(sys, cur)
        rhs = -np.concatenate([r.values[:n] for r in res])
        try:
            delta = spla.spsolve(_be_jacobian(sys, cur), rhs)
        except Exception:
            return cur, dual, False
        if not np.all(np.isfinite(delta)):
            return cur, dual, False
        t = 1.0
        improved = False
        while t >= 1e-4:
            fields = []
            for i, u in enumerate(cur):
                v = u.values.copy()
                v[:n] += t * delta[i * n:(i + 1) * n]
                v[-1] = 0.0
                fields.append(RadialField(grid, v))
            cand = VectorState(tuple(fields))
            d_new = be_dual_norm(sys, be_residual(sys, cand))
            if d_new < dual * (1.0 - 0.25 * t) or d_new <= tol:
                cur, dual = cand, d_new
                improved = True
                break
            t *= 0.5
        if not improved:
            return cur, dual, False
    return cur, dual, dual <= tol


def be_system_probe(sys: BESystem, grounds, epsilons, tol: float = 1e-8,
                    collapse_factor: float = 100.0) -> ProbeReport:
    """Same probe protocol against the BE couplings.

    Here the dichotomy is per component: every nonzero component of a
    converged solution has ||u_i||^2_{lambda_i} above the reference bound.
    """
    g1 = grounds[0]
    grid = sys.grid
    phi = default_kick(grid)
    dilated = [dilate(g1.omega, s) for s in (-0.3, 0.0, 0.3)]
    cprime = max(sobolev_constant_estimate(grid, lam, dilated)
                 for lam in sys.lambdas)
    N = grid.dim
    two_star = 2.0 * N / (N - 2.0)
    rho_paper = (2.0 * cprime) ** (-2.0 / (two_star - 2.0))
    M = g1.h1_norm() + 1.0
    beta_window = 1.0 / (2.0 * cprime * M ** 2)
    attempts = []
    rho_emp = math.inf
    threshold = collapse_factor * tol * tol
    for eps in epsilons:
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            seed = VectorState((g1.omega.copy(), eps * phi, (sign * eps) * phi))
            endpoint, dual, ok = be_newton(sys, seed, tol=tol)
            if not ok:
                raise SolverError(
                    f"BE probe attempt did not converge (eps={eps:g}{tag}, dual={dual:.3e})")
            comp = tuple(inner_lambda(endpoint[i], endpoint[i], sys.lambdas[i])
                         for i in range(3))
            nonzero = [c for c in comp if c > threshold]
            coupled = comp[1] + comp[2]
            outcome = "scalar_collapse" if coupled <= threshold else "vector_found"
            for c in nonzero:
                rho_emp = min(rho_emp, c)
            attempts.append(ProbeAttempt(
                seed_label=f"eps={eps:g}{tag}", outcome=outcome,
                coupled_norm_sq=coupled, component_lambda_sq=comp,
                eps=float(eps), sign=sign))
    for at in attempts:
        for c in at.component_lambda_sq:
            if threshold < c < rho_paper:
                raise DichotomyViolation(
                    "per-component dichotomy violation: component norm "
                    f"{c:.3e} in the forbidden band (below {rho_paper:.3e})")
    return ProbeReport(alpha=float(np.max(np.abs(sys.betas))), attempts=attempts,
                       rho_empirical=rho_emp, rho_paper=rho_paper,
                       sobolev_constant=cprime, alpha_window=beta_window,
                       collapse_threshold=threshold)


def structural_contrast(sys_threewave: SystemSpec, sys_be: BESystem,
                        box_y: PathBox, tol: float = 1e-8,
                        epsilon_kick: float = 1e-3) -> dict:
    """Identical seed, both couplings: the three-wave system produces a
    vector solution (third component forced nonzero) while the BE system
    collapses it (u3 = 0 is invariant there)."""
    surf = box_energy_surface(sys_threewave, box_y)
    start = box_y.path_state(surf.maximizer)
    kick = epsilon_kick * default_kick(box_y.grid)
    seed = VectorState((start[0], start[1], kick))

    tw = solve_branch_Y(sys_threewave, box_y, tol=tol, epsilon_kick=epsilon_kick)
    tw_third = h1_norm(tw.state[2])

    be_end, be_dual, ok = be_newton(sys_be, seed.copy(), tol=tol)
    if not ok:
        raise SolverError(f"BE contrast solve did not converge (dual={be_dual:.3e})")
    be_third = h1_norm(be_end[2])
    return {
        "threewave_third_norm": tw_third,
        "threewave_vector_found": tw_third > 10.0 * tol,
        "be_third_norm": be_third,
        "be_vector_found": be_third > 10.0 * tol,
        "seed_label": f"tau-max + {epsilon_kick:g}*bump",
        "coupling": sys_threewave.alpha,
    }


def empirical_alpha_threshold(sys_template: SystemSpec, box: PathBox,
                              candidates, branch: str = "X",
                              tol: float = 1e-6) -> float | None:
    """Largest candidate coupling at which the strict branch solve succeeds
    inside its neighborhood (the empirical window edge; reported, not
    claimed to match any theoretical constant)."""
    best = None
    for a in sorted(candidates):
        sys_a = sys_template.with_alpha(float(a))
        try:
            if branch == "X":
                solve_branch_X(sys_a, box, tol=tol)
            else:
                solve_branch_Y(sys_a, box, tol=tol)
            best = float(a)
        except SolverError:
            break
    return best
