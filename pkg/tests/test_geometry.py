import math

import numpy as np
import pytest

from measureflow.analytic import gaussian_field
from measureflow.energy import EnergyFunctional
from measureflow.geometry import (
    BumpProfile,
    CurveDomainError,
    CylinderFunction,
    GradientSubspaceBasis,
    HermiteProfile,
    PushforwardCurve,
    check_profile_support,
    cylinder_gradient,
    cylinder_value,
    det_derivative_check,
    diff_energy_fd,
    make_gradient_generators,
    profile_field,
    profile_gradient_field,
    project_onto_G,
    pushforward_density,
)
from measureflow.grid import DensityField, Grid, VectorFieldSample, divergence_of, integrate
from measureflow.laws import Potential, ScalarLaw


def heat_fnl(phi=None):
    return EnergyFunctional.general(ScalarLaw.linear(1.0), ScalarLaw.const(1.0),
                                    phi or Potential.none())


class TestProfiles:
    def test_bump_compact_support(self):
        grid = Grid.line(-4, 4, 256)
        bump = BumpProfile((0.0,), 1.5)
        vals = profile_field(bump, grid)
        x = grid.axis(0)
        assert np.all(vals[np.abs(x) >= 1.5] == 0.0)
        assert vals.max() > 0.3

    def test_bump_gradient_matches_fd(self):
        bump = BumpProfile((0.2,), 1.3)
        x = np.linspace(-1.0, 1.4, 41)
        h = 1e-6
        fd = (bump.value(x + h) - bump.value(x - h)) / (2 * h)
        assert np.abs(bump.gradient(x)[0] - fd).max() <= 1e-7

    def test_hermite_gradient_matches_fd(self):
        for order in (1, 2, 3, 4):
            prof = HermiteProfile(order, 0.8, (0.1,))
            x = np.linspace(-5.5, 5.9, 57)
            h = 1e-6
            fd = (prof.value(x + h) - prof.value(x - h)) / (2 * h)
            assert np.abs(prof.gradient(x)[0] - fd).max() <= 1e-6

    def test_hermite_compactly_supported(self):
        prof = HermiteProfile(3, 0.5, (0.0,))
        assert prof.value(np.array([prof.support_radius + 0.1]))[0] == 0.0

    def test_support_check_raises(self):
        grid = Grid.line(-2, 2, 64)
        with pytest.raises(ValueError):
            check_profile_support(BumpProfile((0.0,), 2.5), grid)

    def test_2d_bump_gradient(self):
        bump = BumpProfile((0.1, -0.2), 1.1)
        x = np.array([0.3]); y = np.array([0.1])
        h = 1e-6
        fdx = (bump.value(x + h, y) - bump.value(x - h, y)) / (2 * h)
        gx = bump.gradient(x, y)[0]
        assert abs(gx[0] - fdx[0]) <= 1e-7


class TestPushforward:
    def setup_method(self):
        self.grid = Grid.line(-8, 8, 256)
        self.base = gaussian_field(self.grid, 0.0, 1.0)
        zeta = BumpProfile((0.4,), 2.0)
        self.phi = profile_gradient_field(zeta, self.grid)

    def test_tau_zero_identity(self):
        curve = PushforwardCurve(self.base, self.phi)
        out = pushforward_density(curve, 0.0)
        assert np.array_equal(out.values, self.base.values)

    def test_zero_direction(self):
        curve = PushforwardCurve(self.base, VectorFieldSample.zero(self.grid),
                                 tau_max=0.7)
        out = pushforward_density(curve, 0.5)
        assert np.abs(out.values - self.base.values).max() == 0.0

    def test_tau_beyond_max_rejected(self):
        curve = PushforwardCurve(self.base, self.phi)
        with pytest.raises(CurveDomainError):
            pushforward_density(curve, 2.0 * curve.tau_max)

    def test_mass_renormalization_factor(self):
        curve = PushforwardCurve(self.base, self.phi)
        h = self.grid.spacing[0]
        for tau in (1e-4, 1e-2, 0.3 * curve.tau_max):
            out, factor = pushforward_density(curve, tau, return_factor=True)
            assert abs(factor - 1.0) <= 10 * h * h
            assert out.mass == pytest.approx(1.0, abs=1e-12)

    def test_monte_carlo_oracle(self):
        # push 1e6 exact-Gaussian samples through Id + tau*phi and compare the
        # histogram against the closed-form pushforward density in L1
        rng = np.random.default_rng(42)
        zeta = BumpProfile((0.4,), 2.0)
        tau = 0.25
        n_samples = 10**6
        xs = rng.normal(0.0, 1.0, n_samples)
        ys = xs + tau * zeta.gradient(xs)[0]
        grid = self.grid
        edges = grid.origin[0] + grid.spacing[0] * np.arange(grid.cells[0] + 1)
        hist, _ = np.histogram(ys, bins=edges)
        mc = hist / (n_samples * grid.cell_volume)
        curve = PushforwardCurve(self.base, self.phi, tau_max=0.5)
        out = pushforward_density(curve, tau)
        l1 = np.abs(out.values - mc).sum() * grid.cell_volume
        assert l1 <= 3.0 * (grid.spacing[0] + grid.spacing[0])


class TestDetDerivative:
    def test_zero_field(self):
        grid = Grid.line(-2, 2, 64)
        rep = det_derivative_check(VectorFieldSample.zero(grid))
        assert rep.max_dev_forward == 0.0
        assert rep.max_dev_inverse == 0.0

    def test_1d_bump_forward_exact(self):
        grid = Grid.line(-4, 4, 256)
        psi = BumpProfile((0.0,), 2.0)
        phi = VectorFieldSample(grid, (psi.value(grid.axis(0)),))
        rep = det_derivative_check(phi, richardson=True)
        # 1D: det is affine in tau, so the forward derivative is exact
        assert rep.max_dev_forward <= 1e-9
        assert rep.max_dev_inverse <= 1e-7

    def test_2d_smooth_field(self):
        grid = Grid.box((-3, -3), (3, 3), (64, 64))
        X, Y = grid.meshes()
        b1, b2 = BumpProfile((0.3, -0.2), 1.8), BumpProfile((-0.4, 0.5), 1.6)
        phi = VectorFieldSample(grid, (b1.value(X, Y), b2.value(X, Y)))
        rep = det_derivative_check(phi)
        assert rep.max_dev_forward <= 1e-6
        assert rep.max_dev_inverse <= 1e-6


class TestCylinderFunctions:
    def setup_method(self):
        self.grid = Grid.line(-8, 8, 256)
        self.field = gaussian_field(self.grid, 0.0, 1.0)

    def test_single_sine_chain_rule(self):
        h1 = BumpProfile((0.0,), 2.0)
        F = CylinderFunction("sin_sum", (1.0,), (h1,))
        mom = integrate(self.field, profile_field(h1, self.grid))
        assert cylinder_value(F, self.field) == pytest.approx(math.sin(mom))
        grad = cylinder_gradient(F, self.field)
        expected = math.cos(mom) * profile_gradient_field(h1, self.grid).components[0]
        assert np.allclose(grad.components[0], expected)

    def test_disjoint_support_moment_vanishes(self):
        # density supported near 0; test function far out in the tail
        grid = Grid.line(-20, 20, 512)
        vals = np.where(np.abs(grid.axis(0)) < 2.0, 1.0, 0.0)
        field = DensityField.from_values(grid, vals)
        h_far = BumpProfile((15.0,), 2.0)
        F = CylinderFunction("tanh_sum", (1.0,), (h_far,))
        assert cylinder_value(F, field) == pytest.approx(math.tanh(0.0))
        grad = cylinder_gradient(F, field)
        # the summand is a nonzero field with zero measure-weighted norm
        assert np.abs(grad.components[0]).max() > 0.0
        norm_sq = integrate(field, grad.components[0] ** 2)
        assert norm_sq == 0.0

    @pytest.mark.parametrize("outer", ["sin_sum", "tanh_sum", "poly_clipped"])
    def test_pushforward_fd_matches_pairing(self, outer):
        # d/dtau F(mu_tau) at 0 = <grad F, phi> against the density
        h1 = BumpProfile((0.3,), 2.2)
        h2 = HermiteProfile(2, 0.9, (0.0,))
        F = CylinderFunction(outer, (0.8, 0.5), (h1, h2))
        zeta = BumpProfile((-0.5,), 1.8)
        phi = profile_gradient_field(zeta, self.grid)
        curve = PushforwardCurve(self.field, phi)
        tau = 1e-4
        fp = cylinder_value(F, pushforward_density(curve, tau))
        fm = cylinder_value(F, pushforward_density(curve, -tau))
        fd = (fp - fm) / (2 * tau)
        pairing = integrate(self.field, cylinder_gradient(F, self.field).dot(phi))
        h = self.grid.spacing[0]
        assert abs(fd - pairing) <= 5.0 * (tau**2 + h**2)

    def test_weighted_gradient_pairing_consistency(self):
        # the weighted gradient b * gradF paired in the weighted product equals
        # the plain gradient paired in the plain product, evaluated both ways
        from measureflow.grid import weighted_inner
        b = ScalarLaw.bounded_rational(1.0, 1.0)
        b_vals = b.evaluate(self.field.values)
        F = CylinderFunction("sin_sum", (1.0,), (BumpProfile((0.2,), 2.0),))
        grad_plain = cylinder_gradient(F, self.field)
        grad_weighted = grad_plain.scaled(b_vals)
        zeta = BumpProfile((-0.3,), 1.5)
        phi = profile_gradient_field(zeta, self.grid)
        lhs = weighted_inner(self.field, 1.0 / b_vals, grad_weighted, phi)
        rhs = integrate(self.field, grad_plain.dot(phi))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_coordinate_moment_derivative_identity(self):
        # d/dtau int h(x + tau phi(x)) dnu at 0 equals int grad h . phi dnu
        h1 = HermiteProfile(2, 1.1, (0.2,))
        zeta = BumpProfile((0.0,), 2.5)
        x = self.grid.axis(0)
        phi_vals = zeta.gradient(x)[0]
        tau = 1e-5
        lhs = (integrate(self.field, h1.value(x + tau * phi_vals))
               - integrate(self.field, h1.value(x - tau * phi_vals))) / (2 * tau)
        rhs = integrate(self.field, h1.gradient(x)[0] * phi_vals)
        assert abs(lhs - rhs) <= 1e-8


class TestDiffEnergyFd:
    def setup_method(self):
        self.grid = Grid.line(-8, 8, 512)
        self.field = gaussian_field(self.grid, 0.3, 1.1)
        self.fnl = heat_fnl(Potential.quadratic(0.5, 1.0))

    def test_zero_direction(self):
        assert diff_energy_fd(self.fnl, self.field,
                              VectorFieldSample.zero(self.grid)) == 0.0

    def test_stationary_state_critical(self):
        st = self.fnl.stationary_state(self.grid)
        zeta = BumpProfile((0.5,), 2.0)
        phi = profile_gradient_field(zeta, self.grid)
        d = diff_energy_fd(self.fnl, st.density, phi)
        h = self.grid.spacing[0]
        assert abs(d) <= 2.0 * (1e-8 + h**2)

    def test_classical_matches_divergence_quadrature(self):
        # for m=2 the differential along phi is -int v^2 div(phi) dx
        fnl = EnergyFunctional.classical(2.0)
        field = gaussian_field(self.grid, 0.0, 1.2)
        zeta = BumpProfile((0.4,), 2.2)
        phi = profile_gradient_field(zeta, self.grid)
        fd = diff_energy_fd(fnl, field, phi, richardson=True)
        from measureflow.grid import lebesgue_integrate
        quad = -lebesgue_integrate(self.grid,
                                   field.values**2 * divergence_of(phi))
        h = self.grid.spacing[0]
        assert abs(fd - quad) <= 5.0 * (1e-8 + h**2)

    def test_linearity(self):
        rng = np.random.default_rng(9)
        z1, z2 = BumpProfile((0.0,), 2.0), BumpProfile((1.0,), 1.5)
        p1 = profile_gradient_field(z1, self.grid)
        p2 = profile_gradient_field(z2, self.grid)
        a, b = rng.uniform(-2, 2, 2)
        combo = p1.scaled(a).plus(p2, b)
        tau = 1e-4
        d_combo = diff_energy_fd(self.fnl, self.field, combo, tau=tau)
        d1 = diff_energy_fd(self.fnl, self.field, p1, tau=tau)
        d2 = diff_energy_fd(self.fnl, self.field, p2, tau=tau)
        h = self.grid.spacing[0]
        assert abs(d_combo - (a * d1 + b * d2)) <= 10.0 * (tau**2 + h**2)


class TestProjection:
    def setup_method(self):
        self.grid = Grid.line(-8, 8, 256)
        self.fnl = heat_fnl(Potential.quadratic(0.5, 1.0))
        self.field = gaussian_field(self.grid, 0.4, 1.0)
        self.b_law = ScalarLaw.const(1.0)

    def test_target_in_span(self):
        gens = make_gradient_generators(self.field, 8)
        basis = GradientSubspaceBasis(self.field, self.b_law, gens)
        zeta = gens[2]
        target = profile_gradient_field(zeta, self.grid)
        coeffs, resid = project_onto_G(basis, target)
        norm = math.sqrt(integrate(self.field, target.dot(target)))
        assert resid <= 1e-8 * norm
        assert coeffs[2] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_target_zero_coeffs(self):
        # remove the projection of a random field onto the span; the remainder
        # is orthogonal to every generator, so re-projecting finds ~0 coeffs
        gens = make_gradient_generators(self.field, 4)
        basis = GradientSubspaceBasis(self.field, self.b_law, gens)
        rng = np.random.default_rng(3)
        raw = VectorFieldSample(self.grid, (rng.normal(size=self.grid.shape),))
        coeffs, _ = project_onto_G(basis, raw)
        b_vals = self.b_law.evaluate(self.field.values)
        perp = raw
        for c, zeta in zip(coeffs, gens):
            gz = profile_gradient_field(zeta, self.grid).scaled(b_vals)
            perp = perp.plus(gz, -c)
        coeffs2, _ = project_onto_G(basis, perp)
        assert np.abs(coeffs2).max() <= 1e-6 * max(1.0, np.abs(coeffs).max())

    def test_energy_gradient_ladder_monotone(self):
        target = self.fnl.gradient_field(self.field, check_domain=False)
        residuals = []
        gens_all = make_gradient_generators(self.field, 32)
        for n in (4, 8, 16, 32):
            basis = GradientSubspaceBasis(self.field, self.b_law, gens_all[:n])
            _, res = project_onto_G(basis, target)
            residuals.append(res)
        assert all(residuals[i + 1] <= residuals[i] + 1e-12 for i in range(3))
        w = self.fnl.weight_values(self.field)
        sq = sum(c * c for c in target.components)
        norm = math.sqrt((w * sq * self.field.values).sum() * self.grid.cell_volume)
        assert residuals[-1] <= 0.10 * norm

    def test_gram_symmetric_psd(self):
        gens = make_gradient_generators(self.field, 8)
        basis = GradientSubspaceBasis(self.field,
                                      ScalarLaw.bounded_rational(1.0, 0.5), gens)
        assert np.abs(basis.gram - basis.gram.T).max() <= 1e-12
        eig = np.linalg.eigvalsh(basis.gram)
        assert eig.min() >= -1e-10 * np.trace(basis.gram)
