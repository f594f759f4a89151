"""measureflow: finite-volume experiments for nonlinear diffusion-drift flows
of probability densities, with entropy/energy verification.

The package solves du/dt = lap(beta(u)) - div(D b(u) u) on truncated boxes,
evaluates the associated energy E(v) = int eta(v) + int Phi v and its
measure-space gradient in the b-weighted tangent geometry, and checks along
every run that the dynamics is the gradient flow of E: the weak flow identity
holds to discretization order, E is a Lyapunov function, dissipation balances
the energy drop, and stationary / self-similar analytic profiles are
reproduced.
"""
from .grid import (
    DensityField,
    Grid,
    GridMismatchError,
    VectorFieldSample,
    divergence_of,
    gradient_of,
    integrate,
    lebesgue_integrate,
    weighted_inner,
)
from .laws import (
    Potential,
    ScalarLaw,
    parse_potential,
    parse_scalar_law,
    validate_balance_condition,
    validate_coefficient_assumptions,
)
from .energy import EnergyFunctional, StationaryState
from .geometry import (
    BumpProfile,
    CylinderFunction,
    HermiteProfile,
    PushforwardCurve,
    cylinder_gradient,
    cylinder_value,
    det_derivative_check,
    diff_energy_fd,
    pushforward_density,
    project_onto_G,
)
from .solver import ModelLaws, SolverConfig, Trajectory, cfl_dt, integrate_path, step
from .analytic import BarenblattProfile, barenblatt, gaussian_field, heat_kernel, gibbs_state
from .verify import VerifyOptions, default_battery, run_verification

__version__ = "0.1.0"
