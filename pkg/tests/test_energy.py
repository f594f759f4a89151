import math

import numpy as np
import pytest

from measureflow.analytic import gaussian_field
from measureflow.energy import (
    EnergyDomainError,
    EnergyFunctional,
    EnergyModeError,
    NoConfinementError,
)
from measureflow.grid import DensityField, Grid, gradient_of, integrate
from measureflow.laws import Potential, ScalarLaw


def heat_functional(phi=None):
    return EnergyFunctional.general(ScalarLaw.linear(1.0), ScalarLaw.const(1.0),
                                    phi or Potential.none())


def gpme_functional(phi=None):
    return EnergyFunctional.general(ScalarLaw.linear_plus_power(0.5, 3.0),
                                    ScalarLaw.bounded_rational(1.0, 1.0),
                                    phi or Potential.none())


class TestEta:
    def test_classical_m2_at_one(self):
        assert EnergyFunctional.classical(2.0).eta(1.0) == pytest.approx(-1.0)

    def test_classical_closed_form(self):
        m = 3.0
        fnl = EnergyFunctional.classical(m)
        rs = np.logspace(-6, 2, 40)
        assert np.allclose(fnl.eta(rs), (rs**m - m * rs) / (m - 1), rtol=1e-12)

    def test_heat_is_boltzmann(self):
        fnl = heat_functional()
        assert fnl.eta(1.0) == pytest.approx(-1.0, abs=1e-12)
        rs = np.logspace(-8, 3, 50)
        assert np.allclose(fnl.eta(rs), rs * (np.log(rs) - 1.0), rtol=1e-10)

    def test_eta_at_zero(self):
        assert heat_functional().eta(0.0) == 0.0
        assert gpme_functional().eta(0.0) == 0.0

    def test_negative_density_rejected(self):
        with pytest.raises(EnergyDomainError):
            heat_functional().eta(-0.5)

    def test_convexity(self):
        rng = np.random.default_rng(5)
        fnl = gpme_functional()
        for _ in range(100):
            r1, r2 = rng.uniform(1e-4, 50.0, 2)
            th = rng.uniform(0.0, 1.0)
            mid = fnl.eta(th * r1 + (1 - th) * r2)
            chord = th * fnl.eta(r1) + (1 - th) * fnl.eta(r2)
            assert mid <= chord + 1e-9

    def test_entropy_sandwich_near_zero(self):
        # linear diffusivity against a varying mobility: gamma = gamma1 = sigma,
        # mobility range [b0, b0 + c] controls the sandwich constants.  The
        # bracket is only order-coherent where r(log r - 1) has a fixed sign,
        # which is the regime that matters (integrable singularity at 0).
        sigma, b0, c = 1.0, 1.0, 1.0
        fnl = EnergyFunctional.general(ScalarLaw.linear(sigma),
                                       ScalarLaw.bounded_rational(b0, c),
                                       Potential.none())
        boltz = lambda r: r * (np.log(r) - 1.0)
        lo_rate, hi_rate = sigma / (b0 + c), sigma / b0
        for r in np.logspace(-6, -0.1, 25):       # r < 1: boltz < 0
            assert hi_rate * boltz(r) - 1e-12 <= fnl.eta(r) <= lo_rate * boltz(r) + 1e-12


class TestGAndInverse:
    def test_heat_g_is_log(self):
        fnl = heat_functional()
        rs = np.logspace(-6, 3, 30)
        assert np.allclose(fnl.g_of(rs), np.log(rs), atol=1e-12)
        assert fnl.g_inverse(1.0) == pytest.approx(math.e, rel=1e-10)

    def test_g_at_one_vanishes_every_mode(self):
        for fnl in (EnergyFunctional.classical(2.0), heat_functional(),
                    gpme_functional(),
                    EnergyFunctional.matrix_diagonal(ScalarLaw.const(0.8),
                                                     ScalarLaw.const(1.25),
                                                     Potential.none())):
            assert abs(fnl.g_of(1.0)) <= 1e-13

    def test_linear2_g_and_inverse(self):
        fnl = EnergyFunctional.general(ScalarLaw.linear(2.0), ScalarLaw.const(1.0),
                                       Potential.none())
        assert fnl.g_of(math.e) == pytest.approx(2.0, rel=1e-12)
        assert fnl.g_inverse(1.0) == pytest.approx(math.exp(0.5), rel=1e-10)

    def test_round_trip(self):
        fnl = gpme_functional()
        ys = np.linspace(fnl.g_of(1e-8), fnl.g_of(5e3), 60)
        back = fnl.g_of(fnl.g_inverse(ys))
        assert (np.abs(back - ys) / np.maximum(1.0, np.abs(ys))).max() <= 1e-9

    def test_g_rejects_nonpositive(self):
        with pytest.raises(EnergyDomainError):
            heat_functional().g_of(0.0)

    def test_g_matches_fd_of_eta(self):
        fnl = gpme_functional()
        rs = np.array([0.03, 0.2, 0.7, 1.0, 2.5, 9.0])
        for h in (1e-4, 1e-5):
            fd = (fnl.eta(rs + h) - fnl.eta(rs - h)) / (2 * h)
            # truncation O(h^2 g'') plus cancellation noise eps*|eta|/h
            tol = 60 * h**2 + 1e-15 * np.abs(fnl.eta(rs)) / h + 1e-10
            assert np.all(np.abs(fnl.g_of(rs) - fd) <= tol)

    def test_eta_minus_rg_derivative(self):
        # d/dr (eta - r g) = -beta'/b
        beta = ScalarLaw.linear_plus_power(0.5, 3.0)
        b = ScalarLaw.bounded_rational(1.0, 1.0)
        fnl = EnergyFunctional.general(beta, b, Potential.none())
        rs = np.array([0.1, 0.5, 1.0, 3.0])
        h = 1e-5
        lhs = ((fnl.eta(rs + h) - (rs + h) * fnl.g_of(rs + h))
               - (fnl.eta(rs - h) - (rs - h) * fnl.g_of(rs - h))) / (2 * h)
        assert np.abs(lhs + beta.derivative(rs) / b.evaluate(rs)).max() <= 1e-7

    def test_matrix_mode_g(self):
        fnl = EnergyFunctional.matrix_diagonal(ScalarLaw.const(0.8),
                                               ScalarLaw.const(1.25),
                                               Potential.none())
        rs = np.logspace(-4, 2, 20)
        assert np.allclose(fnl.g_of(rs), 0.8 * np.log(rs), atol=1e-12)


class TestEnergyValue:
    def test_classical_uniform_on_unit_interval(self):
        grid = Grid.line(0.0, 1.0, 64)
        f = DensityField.from_values(grid, np.ones(64))
        fnl = EnergyFunctional.classical(2.0)
        assert fnl.energy_value(f) == pytest.approx(-1.0, abs=1e-12)

    def test_heat_uniform_on_unit_interval(self):
        grid = Grid.line(0.0, 1.0, 64)
        f = DensityField.from_values(grid, np.ones(64))
        assert heat_functional().energy_value(f) == pytest.approx(-1.0, abs=1e-12)

    def test_offset_shifts_energy_by_mass(self):
        grid = Grid.line(-8, 8, 256)
        f = gaussian_field(grid, 0.0, 1.0)
        e1 = heat_functional(Potential.quadratic(0.5, 1.0)).energy_value(f)
        e2 = heat_functional(Potential.quadratic(0.5, 3.5)).energy_value(f)
        assert e2 - e1 == pytest.approx(2.5, abs=1e-10)


class TestMembership:
    def test_gaussian_is_member(self):
        grid = Grid.line(-8, 8, 256)
        f = gaussian_field(grid, 0.0, 1.0)
        rep = heat_functional().membership(f)
        assert rep.member
        assert rep.gradient_surrogate == pytest.approx(1.0, rel=0.05)

    def test_near_dirac_flagged_and_blows_up(self):
        fnl = heat_functional()
        surrogates = []
        for n in (128, 256, 512):
            grid = Grid.line(-1, 1, n)
            vals = np.zeros(n)
            vals[n // 2] = 1.0
            f = DensityField.from_values(grid, vals)
            rep = fnl.membership(f)
            surrogates.append(rep.gradient_surrogate)
            assert not rep.member
        assert surrogates[1] / surrogates[0] > 3.5
        assert surrogates[2] / surrogates[1] > 3.5

    def test_barenblatt_is_member_classical(self):
        from measureflow.analytic import BarenblattProfile, barenblatt
        grid = Grid.line(-6, 6, 256)
        prof = BarenblattProfile.create(2.0, 1)
        f = barenblatt(prof, 1.0, grid)
        rep = EnergyFunctional.classical(2.0).membership(f)
        assert rep.member

    def test_gradient_field_raises_outside_domain(self):
        grid = Grid.line(-1, 1, 256)
        vals = np.zeros(256)
        vals[128] = 1.0
        f = DensityField.from_values(grid, vals)
        with pytest.raises(EnergyDomainError):
            heat_functional().gradient_field(f)


class TestGradientField:
    def test_stationary_gradient_vanishes(self):
        grid = Grid.line(-10, 10, 512)
        fnl = heat_functional(Potential.quadratic(0.5, 1.0))
        st = fnl.stationary_state(grid)
        g = fnl.gradient_field(st.density)
        mask = st.density.support_mask(1e-11)
        sup = max(np.abs(np.where(mask, c, 0.0)).max() for c in g.components)
        assert sup <= 1e-9

    def test_classical_m2_forms_agree(self):
        grid = Grid.line(-8, 8, 512)
        f = gaussian_field(grid, 0.0, 1.5)
        fnl = EnergyFunctional.classical(2.0)
        prod = fnl.gradient_field(f, form="product")
        quot = fnl.gradient_field(f, form="quotient")
        # both reduce to 2*grad(v) for m=2; the product form hits it exactly
        # (g(v) is affine in v), the quotient form to O(h^2)
        mask = f.support_mask(1e-6)
        gv = gradient_of(f.values, grid).components[0]
        err_p = np.abs(np.where(mask, prod.components[0] - 2 * gv, 0.0)).max()
        err_q = np.abs(np.where(mask, quot.components[0] - 2 * gv, 0.0)).max()
        gap = np.abs(np.where(mask, prod.components[0] - quot.components[0], 0.0)).max()
        h = grid.spacing[0]
        assert err_p <= 1e-10
        assert err_q <= 5 * h**2
        assert gap <= 5 * h**2

    def test_general_forms_agree_o_h2(self):
        gaps = []
        for n in (256, 512):
            grid = Grid.line(-8, 8, n)
            f = gaussian_field(grid, 0.3, 1.2)
            fnl = gpme_functional(Potential.quadratic(0.25, 1.0))
            prod = fnl.gradient_field(f, form="product")
            quot = fnl.gradient_field(f, form="quotient")
            mask = f.support_mask(1e-8)
            gaps.append(np.abs(np.where(mask, prod.components[0] - quot.components[0],
                                        0.0)).max())
        assert gaps[1] <= 0.35 * gaps[0]

    def test_gibbs_density_zero_gradient_heat_mode(self):
        grid = Grid.line(-9, 9, 512)
        fnl = heat_functional(Potential.quadratic(0.5, 1.0))
        x = grid.axis(0)
        gibbs = DensityField.from_values(grid, np.exp(-x**2 / 2))
        g = fnl.gradient_field(gibbs, form="product", check_domain=False)
        mask = gibbs.support_mask(1e-11)
        assert np.abs(np.where(mask, g.components[0], 0.0)).max() <= 1e-8


class TestStationaryState:
    def test_heat_quadratic_gaussian(self):
        grid = Grid.line(-10, 10, 512)
        fnl = heat_functional(Potential.quadratic(0.5, 1.0))
        st = fnl.stationary_state(grid)
        x = grid.axis(0)
        exact = np.exp(-x**2 / 2) / math.sqrt(2 * math.pi)
        assert np.abs(st.density.values - exact).max() <= 1e-6
        assert st.c == pytest.approx(1.0 - math.log(math.sqrt(2 * math.pi)), abs=1e-8)
        assert st.density.mass == pytest.approx(1.0, abs=1e-8)

    def test_offset_shift_moves_constant_only(self):
        grid = Grid.line(-10, 10, 256)
        st1 = heat_functional(Potential.quadratic(0.5, 1.0)).stationary_state(grid)
        st2 = heat_functional(Potential.quadratic(0.5, 2.0)).stationary_state(grid)
        assert st2.c - st1.c == pytest.approx(1.0, abs=1e-8)
        assert np.abs(st1.density.values - st2.density.values).max() <= 1e-10

    def test_linear2_profile(self):
        grid = Grid.line(-10, 10, 512)
        fnl = EnergyFunctional.general(ScalarLaw.linear(2.0), ScalarLaw.const(1.0),
                                       Potential.quadratic(0.5, 1.0))
        st = fnl.stationary_state(grid)
        x = grid.axis(0)
        prop = np.exp(-(1.0 + 0.5 * x**2) / 2.0)
        prop /= prop.sum() * grid.cell_volume
        assert np.abs(st.density.values - prop).max() <= 1e-8

    def test_classical_mode_rejected(self):
        with pytest.raises(EnergyModeError):
            EnergyFunctional.classical(2.0).stationary_state(Grid.line(-5, 5, 64))

    def test_no_confinement_error(self):
        with pytest.raises(NoConfinementError):
            heat_functional().stationary_state(Grid.line(-5, 5, 64))

    def test_dissipation_rate_zero_at_equilibrium(self):
        grid = Grid.line(-10, 10, 256)
        fnl = heat_functional(Potential.quadratic(0.5, 1.0))
        st = fnl.stationary_state(grid)
        # clamp-region cells contribute at the floor*|grad Phi|^2 level only
        assert fnl.dissipation_rate(st.density) <= 1e-8
