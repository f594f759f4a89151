import math

import numpy as np
import pytest

from measureflow.analytic import BarenblattProfile, barenblatt, gaussian_field
from measureflow.energy import EnergyFunctional
from measureflow.grid import DensityField, Grid, integrate
from measureflow.laws import Potential, ScalarLaw
from measureflow.solver import (
    DomainMarginError,
    ModelLaws,
    PositivityError,
    SolverConfig,
    StepSizeError,
    Trajectory,
    cfl_dt,
    discrete_stationary_state,
    integrate_path,
    step,
)

HEAT = ModelLaws(ScalarLaw.linear(1.0), ScalarLaw.const(1.0), Potential.none())


class TestStep:
    def test_delta_reproduces_heat_stencil(self):
        grid = Grid.line(0, 1, 11)
        u = np.zeros(11)
        u[5] = 1.0 / grid.cell_volume
        f = DensityField(grid, u)
        h = grid.spacing[0]
        dt = 0.2 * h**2
        out = step(f, HEAT, dt)
        expected = u + dt / h**2 * (np.roll(u, 1) - 2 * u + np.roll(u, -1))
        assert np.allclose(out.values, expected, rtol=1e-14, atol=1e-14)

    def test_cfl_violation_rejected(self):
        grid = Grid.line(0, 1, 32)
        f = DensityField.from_values(grid, np.ones(32))
        with pytest.raises(StepSizeError):
            step(f, HEAT, 10.0 * grid.spacing[0] ** 2)

    def test_stationary_profile_held_to_h2(self):
        # the flux residual at the exact continuum equilibrium is O(h^2)
        # with the centered drift average
        laws = ModelLaws(ScalarLaw.linear(1.0), ScalarLaw.const(1.0),
                         Potential.quadratic(0.5, 1.0))
        fnl = EnergyFunctional.general(*laws.__dict__.values()) \
            if False else EnergyFunctional.general(laws.beta, laws.b, laws.phi)
        rates = []
        for n in (128, 256):
            grid = Grid.line(-8, 8, n)
            st = fnl.stationary_state(grid)
            dt = cfl_dt(st.density, laws)
            out = step(st.density, laws, dt, drift_flux="centered")
            rates.append(np.abs(out.values - st.density.values).max() / dt)
        assert rates[1] <= 0.3 * rates[0]

    def test_upwind_preserves_order(self):
        # cell-wise comparison principle of the monotone explicit scheme
        grid = Grid.line(-6, 6, 128)
        laws = ModelLaws(ScalarLaw.power(2.0), ScalarLaw.const(1.0),
                         Potential.quadratic(0.25, 1.0))
        lo = gaussian_field(grid, 0.0, 1.0)
        hi_vals = lo.values + gaussian_field(grid, 0.5, 1.5).values
        hi = DensityField(grid, hi_vals)
        dt = min(cfl_dt(lo, laws), cfl_dt(hi, laws))
        for _ in range(20):
            lo2 = step(lo, laws, dt, drift_flux="upwind")
            hi2 = step(hi, laws, dt, drift_flux="upwind")
            assert np.all(hi2.values - lo2.values >= -1e-14)
            lo, hi = lo2, hi2


class TestCfl:
    def test_formula_example(self):
        grid = Grid.line(0, 1, 10)  # h = 0.1
        f = DensityField.from_values(grid, np.ones(10))
        assert cfl_dt(f, HEAT, safety=0.5) == pytest.approx(0.0025)

    def test_h_squared_scaling(self):
        f1 = DensityField.from_values(Grid.line(0, 1, 10), np.ones(10))
        f2 = DensityField.from_values(Grid.line(0, 2, 10), np.ones(10))
        assert cfl_dt(f2, HEAT, safety=1.0) == pytest.approx(
            4.0 * cfl_dt(f1, HEAT, safety=1.0))

    def test_degenerate_returns_max_dt(self):
        grid = Grid.line(0, 1, 16)
        f = DensityField(grid, np.zeros(16))
        laws = ModelLaws(ScalarLaw.power(2.0), ScalarLaw.const(1.0), Potential.none())
        assert cfl_dt(f, laws, max_dt=0.125) == 0.125

    def test_drift_bound_active(self):
        grid = Grid.line(-4, 4, 64)
        f = gaussian_field(grid, 0.0, 1.0)
        laws = ModelLaws(ScalarLaw.linear(1e-6), ScalarLaw.const(1.0),
                         Potential.quadratic(1.0, 1.0))
        h = grid.spacing[0]
        max_d = 2.0 * np.abs(grid.axis(0)).max()  # |D| = 2a|x| over cell centers
        assert cfl_dt(f, laws, safety=1.0) == pytest.approx(h / max_d, rel=1e-12)


class TestIntegratePath:
    def test_zero_duration(self):
        grid = Grid.line(-8, 8, 64)
        u0 = gaussian_field(grid, 0.0, 1.0)
        traj = integrate_path(u0, HEAT, SolverConfig(t0=0.0, t1=0.0))
        assert len(traj) == 1
        assert traj.times[0] == 0.0

    def test_heat_variance_growth(self):
        grid = Grid.line(-8.5, 8.5, 256)
        u0 = gaussian_field(grid, 0.0, 1.0)
        traj = integrate_path(u0, HEAT, SolverConfig(t0=0, t1=0.25, store_every=50))
        x = grid.axis(0)
        growth = integrate(traj.states[-1], x**2) - integrate(traj.states[0], x**2)
        assert growth == pytest.approx(2 * 1.0 * 0.25, rel=0.02)

    def test_mass_conserved_over_many_steps(self):
        grid = Grid.line(-8.5, 8.5, 128)
        u0 = gaussian_field(grid, 0.0, 1.0)
        traj = integrate_path(u0, HEAT, SolverConfig(t0=0, t1=2.0, store_every=10**9,
                                                     enforce_margin=False))
        assert traj.meta["n_steps"] >= 500
        assert np.abs(traj.diagnostics["mass"] - 1.0).max() <= 1e-10
        assert np.abs(traj.diagnostics["mass_drift"]).max() <= 1e-13

    def test_margin_violation_detected(self):
        grid = Grid.line(-3, 3, 64)  # too small for a unit Gaussian
        u0 = gaussian_field(grid, 0.0, 1.0)
        with pytest.raises(DomainMarginError):
            integrate_path(u0, HEAT, SolverConfig(t0=0, t1=0.1))

    def test_unnormalized_input_rejected(self):
        grid = Grid.line(-8, 8, 64)
        u0 = DensityField(grid, gaussian_field(grid, 0, 1).values * 1.5)
        with pytest.raises(ValueError):
            integrate_path(u0, HEAT, SolverConfig(t0=0, t1=0.1))

    def test_identical_runs_coincide(self):
        grid = Grid.line(-8.5, 8.5, 128)
        u0 = gaussian_field(grid, 0.0, 1.0)
        cfg = SolverConfig(t0=0, t1=0.1, store_every=10)
        t1 = integrate_path(u0, HEAT, cfg)
        t2 = integrate_path(u0, HEAT, cfg)
        assert np.array_equal(t1.states[-1].values, t2.states[-1].values)

    def test_semi_implicit_matches_explicit(self):
        grid = Grid.line(-8.5, 8.5, 128)
        u0 = gaussian_field(grid, 0.0, 1.0)
        exp = integrate_path(u0, HEAT, SolverConfig(t0=0, t1=0.2, store_every=10**9))
        semi = integrate_path(u0, HEAT, SolverConfig(
            t0=0, t1=0.2, scheme="semi_implicit", max_dt=2e-3, store_every=10**9))
        assert np.abs(semi.diagnostics["mass"] - 1.0).max() <= 1e-10
        gap = np.abs(exp.states[-1].values - semi.states[-1].values).max()
        assert gap <= 5e-3  # O(dt) time-discretization difference

    def test_semi_implicit_2d_conserves(self):
        grid = Grid.box((-7, -7), (7, 7), (48, 48))
        u0 = gaussian_field(grid, 0.0, 0.8)
        traj = integrate_path(u0, HEAT, SolverConfig(
            t0=0, t1=0.05, scheme="semi_implicit", max_dt=2e-3, store_every=10**9))
        assert np.abs(traj.diagnostics["mass"] - 1.0).max() <= 1e-10

    def test_barenblatt_l1_first_order(self):
        prof = BarenblattProfile.create(2.0, 1)
        laws = ModelLaws(ScalarLaw.power(2.0), ScalarLaw.const(1.0), Potential.none())
        errs, hs = [], []
        for n in (64, 128, 256):
            grid = Grid.line(-6, 6, n)
            u0 = barenblatt(prof, 1.0, grid)
            traj = integrate_path(u0, laws, SolverConfig(t0=1, t1=2, store_every=10**9))
            exact = barenblatt(prof, 2.0, grid)
            errs.append(np.abs(traj.states[-1].values - exact.values).sum()
                        * grid.cell_volume)
            hs.append(grid.spacing[0])
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope >= 0.8
        assert errs[-1] <= errs[0]


class TestDiscreteStationary:
    @pytest.mark.parametrize("flux", ["upwind", "centered"])
    def test_exact_fixed_point(self, flux):
        grid = Grid.line(-8, 8, 128)
        laws = ModelLaws(ScalarLaw.linear(1.0), ScalarLaw.const(1.0),
                         Potential.quadratic(0.5, 1.0))
        u = discrete_stationary_state(laws, grid, flux)
        assert u.mass == pytest.approx(1.0, abs=1e-12)
        dt = cfl_dt(u, laws)
        out = step(u, laws, dt, drift_flux=flux)
        assert np.abs(out.values - u.values).max() <= 1e-12 * u.values.max()

    def test_nonlinear_diffusivity_fixed_point(self):
        grid = Grid.line(-6, 6, 96)
        laws = ModelLaws(ScalarLaw.linear_plus_power(0.5, 3.0),
                         ScalarLaw.bounded_rational(1.0, 1.0),
                         Potential.quadratic(0.5, 1.0))
        u = discrete_stationary_state(laws, grid, "upwind")
        dt = cfl_dt(u, laws)
        out = step(u, laws, dt, drift_flux="upwind")
        assert np.abs(out.values - u.values).max() <= 1e-10 * u.values.max()
