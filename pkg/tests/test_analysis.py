"""Continuation sweeps, limit-set distances and nonexistence probes."""
import math

import numpy as np
import pytest

from threewave.analysis import (BESystem, DichotomyViolation, be_newton,
                                be_residual, be_system_probe,
                                dist_to_limit_sets, empirical_alpha_threshold,
                                nonexistence_probe, sobolev_constant_estimate,
                                structural_contrast, sweep)
from threewave.functionals import state_h_norm_sq
from threewave.minimax import default_kick, descend, newton_refine
from threewave.radial import (RadialField, VectorState, dilate, h1_norm,
                              make_grid, zeros)

from conftest import CUBIC, NO_F3


class TestDistToLimitSets:
    def test_product_point(self, ground3, grid3):
        st = VectorState((ground3.omega.copy(),) * 3)
        dX, dY, dZ = dist_to_limit_sets(st, (ground3, ground3, ground3))
        nrm = ground3.h1_norm()
        assert dX == 0.0
        assert dY == pytest.approx(nrm, rel=1e-12)
        assert dZ == pytest.approx(np.sqrt(2) * nrm, rel=1e-12)

    def test_scalar_point(self, ground3, grid3):
        st = VectorState((ground3.omega.copy(), zeros(grid3), zeros(grid3)))
        dX, dY, dZ = dist_to_limit_sets(st, (ground3, ground3, ground3))
        assert dZ == 0.0

    def test_missing_third_ground(self, ground3, grid3):
        st = VectorState((ground3.omega.copy(),) * 3)
        dX, dY, dZ = dist_to_limit_sets(st, (ground3, ground3, None))
        assert dX is None and dY >= 0 and dZ >= 0


@pytest.fixture(scope="module")
def sweep_x_result(sys3_factory, box_x):
    return sweep(sys3_factory(0.0), box_x, [0.2, 0.1, 0.05, 0.025], "X", tol=1e-8)


@pytest.fixture(scope="module")
def sweep_y_result(sys3_factory, box_y):
    return sweep(sys3_factory(0.0, NO_F3), box_y, [0.1, 0.05, 0.025], "Y", tol=1e-8)


@pytest.fixture(scope="module")
def probe_report(sys3_factory, ground3):
    eps = [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0]
    return nonexistence_probe(sys3_factory(0.05), (ground3,), eps, tol=1e-8)


class TestSweepX:
    def test_completes(self, sweep_x_result):
        assert sweep_x_result.failed_alpha is None
        assert [r.alpha for r in sweep_x_result.records] == [0.2, 0.1, 0.05, 0.025]

    def test_converged_records(self, sweep_x_result):
        for r in sweep_x_result.records:
            assert r.dual_norm <= 1e-8
            assert all(h1 > 1.0 for _, h1 in r.component_norms)

    def test_distance_decreasing(self, sweep_x_result):
        dx = [r.dist_X for r in sweep_x_result.records]
        assert all(x > y for x, y in zip(dx, dx[1:]))

    def test_near_linear_scaling(self, sweep_x_result):
        # first-order in alpha: dist(0.05)/dist(0.1) close to 1/2
        dx = {r.alpha: r.dist_X for r in sweep_x_result.records}
        ratio = dx[0.05] / dx[0.1]
        assert abs(ratio - 0.5) <= 0.125  # within 25%

    def test_warm_start_consistency(self, sweep_x_result, sys3_factory, box_x):
        # cold re-solve at an interior sweep point reaches the same solution
        cold = sweep(sys3_factory(0.0), box_x, [0.05], "X", tol=1e-8)
        warm_state = next(r.state for r in sweep_x_result.records if r.alpha == 0.05)
        gap_sq = state_h_norm_sq(
            sys3_factory(0.05),
            VectorState(tuple(RadialField(box_x.grid, a.values - b.values)
                              for a, b in zip(cold.records[0].state, warm_state))))
        assert np.sqrt(gap_sq) <= 1e-4

    def test_dist_Z_bounded_below(self, sweep_x_result, ground3):
        for r in sweep_x_result.records:
            assert r.dist_Z >= 0.5 * ground3.h1_norm()

    def test_validates_alpha_order(self, sys3_factory, box_x):
        with pytest.raises(ValueError, match="decreasing"):
            sweep(sys3_factory(0.0), box_x, [0.05, 0.1], "X")


class TestSweepY:
    def test_third_component_decreasing(self, sweep_y_result):
        n3 = [r.component_norms[2][1] for r in sweep_y_result.records]
        assert all(x > y for x, y in zip(n3, n3[1:]))
        assert all(x > 10 * 1e-8 for x in n3)

    def test_dist_Y_decreasing(self, sweep_y_result):
        dy = [r.dist_Y for r in sweep_y_result.records]
        assert all(x > y for x, y in zip(dy, dy[1:]))

    def test_dist_X_unavailable(self, sweep_y_result):
        assert all(r.dist_X is None for r in sweep_y_result.records)


class TestSobolevEstimate:
    def test_positive_and_refinement_stable(self):
        vals = {}
        for n in (1000, 2000):
            vals[n] = sobolev_constant_estimate(make_grid(3, 20.0, n), 1.0)
        assert vals[2000] > 0
        assert abs(vals[2000] - vals[1000]) <= 0.05 * vals[2000]

    def test_individual_quotients_below_max(self, grid3):
        from threewave.radial import field_from_callable, inner_lambda, integrate_values
        c = sobolev_constant_estimate(grid3, 1.0)
        u = field_from_callable(grid3, lambda r: np.exp(-r ** 2 / 2))
        u.values[-1] = 0.0
        nl = np.sqrt(inner_lambda(u, u, 1.0))
        q1 = integrate_values(grid3, np.abs(u.values) ** 6) / nl ** 6
        q2 = integrate_values(grid3, np.abs(u.values) ** 3) / nl ** 3
        assert max(q1, q2) <= c * (1 + 1e-12)

    def test_monotone_in_lambda(self, grid3):
        assert sobolev_constant_estimate(grid3, 2.0) <= sobolev_constant_estimate(grid3, 1.0)


class TestNonexistenceProbe:
    def test_all_outcomes_classified(self, probe_report):
        assert len(probe_report.attempts) == 14
        assert all(at.outcome in ("scalar_collapse", "vector_found")
                   for at in probe_report.attempts)

    def test_small_eps_collapses_to_scalar(self, probe_report):
        small = [at for at in probe_report.attempts if at.eps == 1e-3]
        assert all(at.outcome == "scalar_collapse" for at in small)
        assert all(at.coupled_norm_sq <= probe_report.collapse_threshold for at in small)

    def test_forbidden_annulus_empty(self, probe_report):
        hi = min(probe_report.rho_empirical, probe_report.rho_paper)
        for at in probe_report.attempts:
            assert not (probe_report.collapse_threshold < at.coupled_norm_sq < hi)

    def test_reference_bound_positive(self, probe_report):
        assert probe_report.rho_paper > 0
        assert probe_report.sobolev_constant > 0
        assert probe_report.rho_empirical > 0  # +inf when no vector endpoint

    def test_alpha_zero_all_collapse(self, sys3_factory, ground3):
        rep = nonexistence_probe(sys3_factory(0.0), (ground3,), [1e-3, 1e-2], tol=1e-8)
        assert all(at.outcome == "scalar_collapse" for at in rep.attempts)

    def test_collapse_lands_on_scalar_solution(self, sys3_factory, ground3, grid3):
        # the eps = 1e-3 endpoint is the semitrivial (omega_1, 0, 0)
        sys_ = sys3_factory(0.05)
        phi = default_kick(grid3)
        seed = VectorState((ground3.omega.copy(), 1e-3 * phi, 1e-3 * phi))
        nr = newton_refine(sys_, seed, tol=1e-8)
        assert nr.converged
        _, _, dZ = dist_to_limit_sets(nr.state, (ground3, ground3, ground3))
        assert dZ <= 1e-2


class TestBEProbe:
    def test_collapse_and_per_component_bound(self, ground3, grid3):
        sys_be = BESystem((CUBIC, CUBIC, CUBIC), (0.05, 0.05, 0.05), grid3)
        rep = be_system_probe(sys_be, (ground3,), [1e-3, 1e-2, 0.1], tol=1e-8)
        assert all(at.outcome == "scalar_collapse" for at in rep.attempts)
        for at in rep.attempts:
            for c in at.component_lambda_sq:
                assert c <= rep.collapse_threshold or c >= rep.rho_paper

    def test_beta_zero_decoupled_collapse(self, ground3, grid3):
        sys_be = BESystem((CUBIC, CUBIC, CUBIC), (0.0, 0.0, 0.0), grid3)
        rep = be_system_probe(sys_be, (ground3,), [1e-3, 1e-2], tol=1e-8)
        assert all(at.outcome == "scalar_collapse" for at in rep.attempts)

    def test_zero_third_component_invariant(self, ground3, grid3):
        # the BE coupling carries a u3 factor: u3 = 0 is exactly invariant
        sys_be = BESystem((CUBIC, CUBIC, NO_F3), (0.1, 0.1, 0.1), grid3)
        st = VectorState((ground3.omega.copy(), ground3.omega.copy(), zeros(grid3)))
        res = be_residual(sys_be, st)
        assert np.all(res[2].values == 0.0)


class TestStructuralContrast:
    def test_binary_outcome(self, sys3_factory, box_y, grid3):
        sys_tw = sys3_factory(0.1, NO_F3)
        sys_be = BESystem((CUBIC, CUBIC, NO_F3), (0.1, 0.1, 0.1), grid3)
        out = structural_contrast(sys_tw, sys_be, box_y, tol=1e-8)
        assert out["threewave_vector_found"] is True
        assert out["be_vector_found"] is False


class TestEmpiricalThreshold:
    def test_reports_largest_working_alpha(self, sys3_factory, box_x):
        best = empirical_alpha_threshold(sys3_factory(0.0), box_x,
                                         [0.05, 0.1], branch="X", tol=1e-6)
        assert best == 0.1
