"""Radial discretization: grids, quadrature, Laplacian, dilation."""
import numpy as np
import pytest
from scipy.special import erf, gamma

from threewave.radial import (GridError, RadialField, VectorState, dilate,
                              field_from_callable, gradient_sq, h1_distance,
                              inner_lambda, integrate, integrate_values,
                              laplacian_apply, make_grid, radial_decay_check,
                              volume_integrate, zeros)

from conftest import smooth_field


def gaussian_moment(k, a):
    """int_0^inf r^k exp(-a r^2) dr."""
    return gamma((k + 1) / 2.0) / (2.0 * a ** ((k + 1) / 2.0))


class TestMakeGrid:
    def test_cubic_default_grid(self):
        g = make_grid(3, 20.0, 2000)
        assert g.h == pytest.approx(0.01, rel=1e-15)
        assert g.sphere_area == pytest.approx(4 * np.pi, rel=1e-12)
        assert g.nodes[0] == pytest.approx(g.h, rel=1e-15)
        assert g.nodes[-1] == 20.0

    def test_sphere_areas(self):
        assert make_grid(4, 15.0, 1500).sphere_area == pytest.approx(2 * np.pi ** 2, rel=1e-12)
        assert make_grid(5, 10.0, 1000).sphere_area == pytest.approx(8 * np.pi ** 2 / 3, rel=1e-12)

    def test_uniform_spacing(self):
        g = make_grid(4, 17.3, 331)
        d = np.diff(g.nodes)
        assert np.max(np.abs(d - g.h)) <= 1e-12 * g.h

    def test_dimension_out_of_range(self):
        with pytest.raises(GridError, match="dimension out of range"):
            make_grid(6, 20.0, 2000)
        with pytest.raises(GridError):
            make_grid(2, 20.0, 2000)

    def test_bad_r_max_and_n(self):
        with pytest.raises(GridError):
            make_grid(3, -1.0, 2000)
        with pytest.raises(GridError):
            make_grid(3, 20.0, 8)

    def test_cell_volumes_partition_ball(self):
        g = make_grid(5, 12.0, 600)
        assert np.sum(g.cell_volumes) == pytest.approx(g.r_max ** 5 / 5.0, rel=1e-13)


class TestIntegrate:
    def test_gaussian_full_space(self):
        # int_{R^3} exp(-|x|^2) dx = pi^(3/2)
        g = make_grid(3, 20.0, 2000)
        u = field_from_callable(g, lambda r: np.exp(-r ** 2))
        assert integrate(u) == pytest.approx(np.pi ** 1.5, rel=1e-8)

    def test_zero(self, grid3):
        assert integrate(zeros(grid3)) == 0.0

    def test_ball_volume(self):
        g = make_grid(3, 20.0, 2000)
        ones = RadialField(g, np.ones(g.n))
        # composite trapezoid error for r^2 on [0, r_max]: (h^2/12) * 2 * r_max
        assert integrate(ones) == pytest.approx(4.0 / 3.0 * np.pi * 20.0 ** 3, rel=2e-7)

    def test_polynomial_second_order(self):
        # g(r) = r^2 (r_max - r): trapezoid error must drop ~4x per halving
        rmax = 6.0
        exact = None
        errs = []
        for n in (600, 1200):
            g = make_grid(3, rmax, n)
            vals = g.nodes ** 2 * (rmax - g.nodes)
            # int (r^2 (rmax - r)) r^2 dr = rmax^6/30 ; times sphere area
            exact = g.sphere_area * rmax ** 6 / 30.0
            errs.append(abs(integrate(RadialField(g, vals)) - exact))
        assert errs[0] / errs[1] >= 3.5

    def test_gaussian_halving_reduces_error(self):
        # truncate at r_max=2 so the O(h^2) boundary term is alive
        errs = []
        for n in (100, 200):
            g = make_grid(3, 2.0, n)
            u = field_from_callable(g, lambda r: np.exp(-r ** 2))
            exact = g.sphere_area * (np.sqrt(np.pi) / 4.0 * erf(2.0) - 1.0 * np.exp(-4.0))
            errs.append(abs(integrate(u) - exact))
        assert errs[0] / errs[1] >= 3.5


class TestGradientSq:
    def test_gaussian_closed_form(self):
        g = make_grid(3, 20.0, 2000)
        u = field_from_callable(g, lambda r: np.exp(-r ** 2 / 2))
        # |u'|^2 = r^2 e^{-r^2}; 4*pi*int r^4 e^{-r^2} = 3 pi^(3/2) / 2
        assert gradient_sq(u) == pytest.approx(1.5 * np.pi ** 1.5, rel=1e-5)

    def test_constant_is_flat(self, grid3):
        u = RadialField(grid3, np.full(grid3.n, 2.7))
        assert gradient_sq(u) <= 1e-20  # rounding residue of the stencils only

    @pytest.mark.parametrize("dim", [3, 4, 5])
    @pytest.mark.parametrize("s", [-1.0, -0.5, 0.5, 1.0])
    def test_dilation_scaling_law(self, dim, s):
        g = make_grid(dim, 20.0, 2000)
        u = field_from_callable(g, lambda r: np.exp(-r ** 2 / 2))
        ratio = gradient_sq(dilate(u, s)) / gradient_sq(u)
        assert ratio == pytest.approx(np.exp((dim - 2) * s), rel=1e-4)

    @pytest.mark.parametrize("dim", [3, 4, 5])
    @pytest.mark.parametrize("s", [-1.0, 0.7])
    def test_l2_mass_scaling_law(self, dim, s):
        g = make_grid(dim, 20.0, 2000)
        u = field_from_callable(g, lambda r: np.exp(-r ** 2 / 2))
        m0 = integrate_values(g, u.values ** 2)
        ms = integrate_values(g, dilate(u, s).values ** 2)
        assert ms / m0 == pytest.approx(np.exp(dim * s), rel=1e-4)


class TestLaplacian:
    def test_gaussian_pointwise(self):
        g = make_grid(3, 20.0, 2000)
        u = field_from_callable(g, lambda r: np.exp(-r ** 2 / 2))
        v = laplacian_apply(u)
        truth = (g.nodes ** 2 - 3.0) * np.exp(-g.nodes ** 2 / 2)
        mask = g.nodes <= 5.0
        assert np.max(np.abs(v.values - truth)[mask]) <= 1e-3

    def test_gaussian_pointwise_4d(self):
        g = make_grid(4, 20.0, 2000)
        u = field_from_callable(g, lambda r: np.exp(-r ** 2 / 2))
        v = laplacian_apply(u)
        truth = (g.nodes ** 2 - 4.0) * np.exp(-g.nodes ** 2 / 2)
        mask = g.nodes <= 5.0
        assert np.max(np.abs(v.values - truth)[mask]) <= 1e-3

    def test_zero(self, grid3):
        assert np.all(laplacian_apply(zeros(grid3)).values == 0.0)

    def test_quadratic_exact_interior(self):
        g = make_grid(3, 20.0, 2000)
        u = RadialField(g, g.nodes ** 2 - g.r_max ** 2)
        v = laplacian_apply(u).values
        assert np.max(np.abs(v[:-1] - 6.0)) <= 1e-6

    @pytest.mark.parametrize("dim", [3, 4, 5])
    def test_symmetry_in_volume_metric(self, dim):
        # self-adjointness w.r.t. the discrete r^(N-1) measure, for fields
        # vanishing at r_max
        g = make_grid(dim, 20.0, 2000)
        worst = 0.0
        for s in range(4):
            a = RadialField(g, smooth_field(g, 11 + s))
            b = RadialField(g, smooth_field(g, 91 + s))
            la, lb = laplacian_apply(a), laplacian_apply(b)
            ip = lambda x, y: volume_integrate(g, x.values * y.values)
            asym = abs(ip(la, b) - ip(a, lb))
            worst = max(worst, asym / np.sqrt(ip(a, a) * ip(b, b)))
        assert worst <= 1e-8


class TestInnerLambda:
    def test_matches_reported_quadratures(self, grid3):
        # same continuum object as gradient_sq + integrate, different
        # quadrature layer: agreement at the discretization level
        u = field_from_callable(grid3, lambda r: np.exp(-r ** 2 / 2))
        ref = gradient_sq(u) + integrate_values(grid3, u.values ** 2)
        assert inner_lambda(u, u, 1.0) == pytest.approx(ref, rel=1e-4)

    def test_zero_field(self, grid3):
        u = RadialField(grid3, smooth_field(grid3, 3))
        assert inner_lambda(u, zeros(grid3), 2.0) == 0.0

    def test_bilinearity(self, grid3):
        u = RadialField(grid3, smooth_field(grid3, 5))
        v = RadialField(grid3, smooth_field(grid3, 6))
        w = RadialField(grid3, smooth_field(grid3, 7))
        a, b = 1.37, -0.64
        lhs = inner_lambda(u, RadialField(grid3, a * v.values + b * w.values), 1.5)
        rhs = a * inner_lambda(u, v, 1.5) + b * inner_lambda(u, w, 1.5)
        assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(rhs)))

    def test_rejects_nonpositive_lambda(self, grid3):
        u = RadialField(grid3, smooth_field(grid3, 8))
        with pytest.raises(ValueError):
            inner_lambda(u, u, 0.0)


class TestDilate:
    def test_identity_bit_for_bit(self, grid3):
        u = RadialField(grid3, smooth_field(grid3, 12))
        w = dilate(u, 0.0)
        assert w is not u
        assert np.array_equal(w.values, u.values)

    def test_round_trip(self, grid3):
        u = field_from_callable(grid3, lambda r: np.exp(-r ** 2 / 2))
        w = dilate(dilate(u, 0.5), -0.5)
        assert np.max(np.abs(w.values - u.values)) <= 1e-6

    def test_out_of_range(self, grid3):
        u = RadialField(grid3, smooth_field(grid3, 13))
        with pytest.raises(ValueError):
            dilate(u, 3.5)

    def test_support_truncation(self, grid3):
        # s < 0 samples u(e^{-s} r) beyond r_max: zero there
        u = RadialField(grid3, np.ones(grid3.n))
        w = dilate(u, -0.7)
        outside = np.exp(0.7) * grid3.nodes > grid3.r_max
        assert np.all(w.values[outside] == 0.0)


class TestH1Distance:
    def _state(self, grid, seeds):
        return VectorState(tuple(RadialField(grid, smooth_field(grid, s)) for s in seeds))

    def test_self_distance(self, grid3):
        x = self._state(grid3, (1, 2, 3))
        assert h1_distance(x, x) == 0.0

    def test_symmetry(self, grid3):
        a = self._state(grid3, (4, 5, 6))
        b = self._state(grid3, (7, 8, 9))
        assert h1_distance(a, b) == h1_distance(b, a)

    def test_triangle_inequality(self, grid3):
        for s in range(8):
            a = self._state(grid3, (s, s + 50, s + 100))
            b = self._state(grid3, (s + 150, s + 200, s + 250))
            c = self._state(grid3, (s + 300, s + 350, s + 400))
            assert h1_distance(a, c) <= h1_distance(a, b) + h1_distance(b, c) + 1e-12


class TestRadialDecay:
    def test_gaussian_peaks_near_one(self, grid3):
        # |u| r^((N-1)/2) for the unit Gaussian is maximal at r = 1 in 3-D
        u = field_from_callable(grid3, lambda r: np.exp(-r ** 2 / 2))
        val = radial_decay_check(u)
        at_one = np.exp(-0.5) * 1.0 / np.sqrt(inner_lambda(u, u, 1.0))
        assert val == pytest.approx(at_one, rel=0.1)

    def test_zero_rejected(self, grid3):
        with pytest.raises(ValueError):
            radial_decay_check(zeros(grid3))

    def test_ground_state_bounded_and_stable(self, ground3):
        v20 = radial_decay_check(ground3.omega)
        assert np.isfinite(v20) and v20 > 0
        # tail-restricted sup decreases with the cutoff (exponential decay
        # beats the r^((N-1)/2) weight)
        g = ground3.grid
        w = np.abs(ground3.omega.values) * g.nodes
        tail = lambda R: np.max(w[g.nodes >= R])
        assert tail(5.0) > tail(8.0) > tail(12.0)
