"""Runtime verification of the gradient-flow structure along a trajectory.

For a stored trajectory t -> u(t) and an energy functional E, this module
checks, with explicit tolerances:

  * gradient-flow identity: for test functions zeta, the time derivative of
    int zeta u dx matches minus the energy differential along b(u) grad zeta,
    assembled two independent ways (closed-form pairing and pushforward finite
    difference); the residual must vanish at discretization order,
  * Lyapunov monotonicity: E(u(t)) nonincreasing up to a dt*(dt + h^2) budget,
  * dissipation identity: E(t) - E(s) vs. minus the time integral of the
    squared weighted gradient norm (tracked as a convergence diagnostic, not
    an exact law),
  * finiteness and refinement stability of the dissipation integral,
  * monotone decrease of the projection residual onto growing families of
    weighted gradient fields.

Residuals are evaluated at stored interior time indices; summary statistics
report the max and the 90th percentile so a single-index spike does not fail
a run, while persistent violations do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .energy import EnergyFunctional
from .grid import DensityField, VectorFieldSample, integrate
from .geometry import (
    BumpProfile,
    GradientSubspaceBasis,
    HermiteProfile,
    diff_energy_fd,
    make_gradient_generators,
    profile_field,
    profile_gradient_field,
    project_onto_G,
)
from .solver import Trajectory

__all__ = [
    "ResidualRecord",
    "LyapunovRecord",
    "LadderRecord",
    "CheckResult",
    "VerificationReport",
    "VerifyOptions",
    "default_battery",
    "differential_probe_battery",
    "gradient_flow_residual",
    "lyapunov_check",
    "dissipation_identity",
    "dissipation_integral",
    "g_membership_ladder",
    "run_verification",
]


# ---------------------------------------------------------------------------
# test-function battery
# ---------------------------------------------------------------------------

def default_battery(traj_or_field, n_bumps: int = 4, n_hermite: int = 4,
                    margin_cells: int = 4) -> list[tuple[str, object]]:
    """Battery of labelled test functions: bumps tiling the support plus
    Gaussian-damped Hermite profiles of orders 1..n_hermite."""
    field = traj_or_field.states[-1] if isinstance(traj_or_field, Trajectory) \
        else traj_or_field
    grid = field.grid
    mask = field.support_mask(floor_rel=1e-8)
    out: list[tuple[str, object]] = []
    bounds = []
    for ax in range(grid.dim):
        axis = grid.axis(ax)
        proj = mask.any(axis=tuple(a for a in range(grid.dim) if a != ax)) \
            if grid.dim > 1 else mask
        lo, hi = float(axis[proj].min()), float(axis[proj].max())
        hard_lo = grid.origin[ax] + margin_cells * grid.spacing[ax]
        hard_hi = grid.origin[ax] + grid.extent[ax] - margin_cells * grid.spacing[ax]
        bounds.append((max(lo, hard_lo), min(hi, hard_hi)))
    center = tuple(0.5 * (lo + hi) for lo, hi in bounds)
    min_span = min(hi - lo for lo, hi in bounds)
    if grid.dim == 1:
        lo, hi = bounds[0]
        span = hi - lo
        centers = np.linspace(lo + span / 8, hi - span / 8, n_bumps)
        radius = 0.45 * span
        radius = min(radius, min(c - grid.origin[0] for c in centers),
                     min(grid.origin[0] + grid.extent[0] - c for c in centers))
        radius -= margin_cells * grid.spacing[0]
        for k, c in enumerate(centers):
            out.append((f"bump{k}", BumpProfile((float(c),), float(radius))))
    else:
        (lox, hix), (loy, hiy) = bounds
        pts = [(lox + (hix - lox) / 3, loy + (hiy - loy) / 3),
               (hix - (hix - lox) / 3, loy + (hiy - loy) / 3),
               (lox + (hix - lox) / 3, hiy - (hiy - loy) / 3),
               (hix - (hix - lox) / 3, hiy - (hiy - loy) / 3)][:n_bumps]
        radius = 0.4 * min(hix - lox, hiy - loy)
        for k, c in enumerate(pts):
            out.append((f"bump{k}", BumpProfile(c, float(radius))))
    for order in range(1, n_hermite + 1):
        scale = min_span / 18.0
        out.append((f"hermite{order}", HermiteProfile(order, scale, center)))
    return out


def differential_probe_battery(field: DensityField, fnl: EnergyFunctional,
                               count: int = 8) -> list[tuple[str, VectorFieldSample]]:
    """Probe fields b(u) grad zeta for the differential identity check.

    Candidates are bumps at staggered centers and two scales; the `count`
    probes pairing most strongly with the energy gradient are kept, so the
    relative comparison of the two differential assemblies is well
    conditioned (probes nearly orthogonal to the gradient carry no signal).
    """
    grid = field.grid
    candidates = default_battery(field, n_bumps=8, n_hermite=0)
    mask = field.support_mask(floor_rel=1e-8)
    bounds = []
    for ax in range(grid.dim):
        axis = grid.axis(ax)
        proj = mask.any(axis=tuple(a for a in range(grid.dim) if a != ax)) \
            if grid.dim > 1 else mask
        bounds.append((float(axis[proj].min()), float(axis[proj].max())))
    if grid.dim == 1:
        lo, hi = bounds[0]
        span = hi - lo
        for k, c in enumerate(np.linspace(lo + 0.31 * span, hi - 0.24 * span, 6)):
            candidates.append((f"narrow{k}", BumpProfile((float(c),), 0.22 * span)))
    grad_e = fnl.gradient_field(field, check_domain=False)
    b_vals = fnl.b_values(field)
    scored = []
    for zid, zeta in candidates:
        zg = profile_gradient_field(zeta, grid)
        pairing = integrate(field, grad_e.dot(zg))
        scored.append((abs(pairing), zid, zg.scaled(b_vals)))
    scored.sort(key=lambda rec: (-rec[0], rec[1]))
    return [(zid, direction) for _, zid, direction in scored[:count]]


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualRecord:
    t: float
    zeta_id: str
    lhs: float
    rhs_closed: float
    rhs_fd: float

    @property
    def residual(self) -> float:
        scale = max(1.0, abs(self.lhs))
        return max(abs(self.lhs - self.rhs_closed), abs(self.lhs - self.rhs_fd)) / scale

    @property
    def rhs_gap(self) -> float:
        return abs(self.rhs_closed - self.rhs_fd) / max(1.0, abs(self.rhs_closed))


@dataclass
class LyapunovRecord:
    times: np.ndarray
    energies: np.ndarray
    tolerance: float
    max_increase: float
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


@dataclass
class LadderRecord:
    times: list[float]
    counts: tuple[int, ...]
    residuals: np.ndarray  # shape (n_times, n_counts)
    target_norms: np.ndarray

    @property
    def monotone(self) -> bool:
        diffs = np.diff(self.residuals, axis=1)
        return bool((diffs <= 1e-12 + 1e-9 * self.residuals[:, :-1]).all())


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str          # "pass" | "fail" | "info"
    tolerance: float
    value: float

    @property
    def ok(self) -> bool:
        return self.status != "fail"


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------

def _three_point_derivative(t0, t1, t2, f0, f1, f2) -> float:
    """Second-order derivative at the middle node of a nonuniform triple."""
    d1, d2 = t1 - t0, t2 - t1
    return (f2 * d1 * d1 + f1 * (d2 * d2 - d1 * d1) - f0 * d2 * d2) \
        / (d1 * d2 * (d1 + d2))


def gradient_flow_residual(traj: Trajectory, fnl: EnergyFunctional, zeta,
                           t_index: int, zeta_id: str = "zeta",
                           tau: Optional[float] = None,
                           richardson: bool = True) -> ResidualRecord:
    """Residual of the weak flow identity at one stored interior time.

    Left side: centered (nonuniform) time difference of int zeta u dx.
    Right side, two independent assemblies: minus the pairing of the energy
    gradient with grad zeta against the density, and minus the pushforward
    finite-difference differential along b(u) grad zeta.
    """
    if t_index <= 0 or t_index >= len(traj) - 1:
        raise IndexError("need a stored interior time index")
    grid = traj.grid
    zeta_vals = profile_field(zeta, grid)
    f = [integrate(traj.states[k], zeta_vals) for k in (t_index - 1, t_index, t_index + 1)]
    t0, t1, t2 = (traj.times[k] for k in (t_index - 1, t_index, t_index + 1))
    lhs = _three_point_derivative(t0, t1, t2, *f)

    state = traj.states[t_index]
    grad_e = fnl.gradient_field(state, check_domain=False)
    zeta_grad = profile_gradient_field(zeta, grid)
    rhs_closed = -integrate(state, grad_e.dot(zeta_grad))

    b_vals = fnl.b_values(state)
    phi_dir = zeta_grad.scaled(b_vals)
    rhs_fd = -diff_energy_fd(fnl, state, phi_dir, tau=tau, richardson=richardson)
    return ResidualRecord(float(traj.times[t_index]), zeta_id, lhs, rhs_closed, rhs_fd)


def lyapunov_check(traj: Trajectory, fnl: EnergyFunctional,
                   tol: Optional[float] = None) -> LyapunovRecord:
    """Energies at stored times; flags increases beyond the dt*(dt+h^2) budget."""
    energies = np.array([fnl.energy_value(s) for s in traj.states])
    times = np.asarray(traj.times)
    h = traj.meta.get("h", min(traj.grid.spacing))
    dt_typ = traj.meta.get("dt_typical", 0.0)
    scale = max(1.0, float(np.abs(energies).max()))
    if tol is None:
        dt_store = float(np.median(np.diff(times))) if len(times) > 1 else dt_typ
        tol = 10.0 * max(dt_store, dt_typ) * (dt_typ + h * h) * scale
    increases = np.diff(energies)
    violations = int((increases > tol).sum())
    max_inc = float(increases.max(initial=0.0))
    return LyapunovRecord(times, energies, tol, max_inc, violations)


def dissipation_rates(traj: Trajectory, fnl: EnergyFunctional) -> np.ndarray:
    return np.array([fnl.dissipation_rate(s) for s in traj.states])


def dissipation_identity(traj: Trajectory, fnl: EnergyFunctional,
                         s_index: int = 0, t_index: int = -1,
                         rates: Optional[np.ndarray] = None):
    """(lhs, rhs, gap): energy drop vs. minus the trapezoidal dissipation integral."""
    if t_index < 0:
        t_index = len(traj) + t_index
    lhs = fnl.energy_value(traj.states[t_index]) - fnl.energy_value(traj.states[s_index])
    if rates is None:
        rates = dissipation_rates(traj, fnl)
    seg = slice(s_index, t_index + 1)
    rhs = -float(np.trapezoid(rates[seg], traj.times[seg]))
    # absolute floor keeps stationary runs (lhs = rhs = 0) well-defined
    scale = max(1.0, abs(fnl.energy_value(traj.states[s_index])))
    gap = abs(lhs - rhs) / max(abs(lhs), 1e-8 * scale)
    return lhs, rhs, gap


def dissipation_integral(traj: Trajectory, fnl: EnergyFunctional,
                         rates: Optional[np.ndarray] = None) -> float:
    """Trapezoidal integral of the squared weighted gradient norm over the run."""
    if rates is None:
        rates = dissipation_rates(traj, fnl)
    return float(np.trapezoid(rates, traj.times))


def g_membership_ladder(traj: Trajectory, fnl: EnergyFunctional,
                        counts: Sequence[int] = (4, 8, 16, 32),
                        n_times: int = 5) -> LadderRecord:
    """Projection of the energy gradient onto nested weighted-gradient families
    at sampled stored times; residuals must be nonincreasing in the count."""
    idx = np.unique(np.linspace(1, len(traj) - 1, n_times).astype(int))
    counts = tuple(sorted(counts))
    residuals = np.zeros((len(idx), len(counts)))
    norms = np.zeros(len(idx))
    times = []
    for row, k in enumerate(idx):
        state = traj.states[k]
        times.append(float(traj.times[k]))
        target = fnl.gradient_field(state, check_domain=False)
        w = fnl.weight_values(state)
        sq = np.zeros(state.grid.shape)
        for c in target.components:
            sq += c * c
        norms[row] = math.sqrt(max(float(
            (w * sq * state.values).sum() * state.grid.cell_volume), 0.0))
        gens_all = make_gradient_generators(state, counts[-1])
        for col, n in enumerate(counts):
            basis = GradientSubspaceBasis(state, fnl.b, gens_all[:n])
            _, res = project_onto_G(basis, target)
            residuals[row, col] = res
    return LadderRecord(times, counts, residuals, norms)


# ---------------------------------------------------------------------------
# umbrella report
# ---------------------------------------------------------------------------

@dataclass
class VerifyOptions:
    battery_size: int = 8
    residual_sample: int = 120
    residual_tol: float = 5e-3
    residual_quantile: float = 0.90
    enable_residuals: bool = True
    enable_lyapunov: bool = True
    enable_dissipation: bool = True
    enable_ladder: bool = False
    ladder_counts: tuple[int, ...] = (4, 8, 16, 32)
    ladder_times: int = 5
    richardson: bool = False
    compare_stationary: bool = False
    stationary_l1_tol: float = 1e-3
    stationary_grad_tol: float = 1e-6
    dissipation_tol: float = 5e-2
    mass_tol: float = 1e-10
    positivity_tol: float = -1e-14
    seed: int = 0


@dataclass
class VerificationReport:
    times: np.ndarray
    energies: np.ndarray
    dissipation: np.ndarray
    residual_records: list
    lyapunov: Optional[LyapunovRecord]
    dissipation_balance: Optional[tuple]
    dissipation_total: Optional[float]
    ladder: Optional[LadderRecord]
    checks: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def residual_quantile(self, q: float = 0.90) -> float:
        if not self.residual_records:
            return 0.0
        return float(np.quantile([r.residual for r in self.residual_records], q))


def _sample_interior_indices(n_states: int, limit: int) -> np.ndarray:
    interior = np.arange(1, n_states - 1)
    if len(interior) <= limit:
        return interior
    return np.unique(np.linspace(1, n_states - 2, limit).astype(int))


def run_verification(traj: Trajectory, fnl: EnergyFunctional,
                     opts: Optional[VerifyOptions] = None,
                     stationary=None) -> VerificationReport:
    """Run the enabled checks over a trajectory and aggregate pass/fail rows."""
    opts = opts or VerifyOptions()
    checks: list[CheckResult] = []

    mass = traj.diagnostics["mass"]
    drift = float(np.abs(mass - 1.0).max()) if len(mass) else 0.0
    checks.append(CheckResult("mass_conservation",
                              "pass" if drift <= opts.mass_tol else "fail",
                              opts.mass_tol, drift))
    min_u = float(traj.diagnostics["min_u"].min()) if len(mass) else \
        float(min(s.values.min() for s in traj.states))
    checks.append(CheckResult("positivity",
                              "pass" if min_u >= opts.positivity_tol else "fail",
                              opts.positivity_tol, min_u))

    energies = np.array([fnl.energy_value(s) for s in traj.states])
    rates = dissipation_rates(traj, fnl)

    lyap = None
    if opts.enable_lyapunov:
        lyap = lyapunov_check(traj, fnl)
        checks.append(CheckResult("lyapunov_monotone",
                                  "pass" if lyap.ok else "fail",
                                  lyap.tolerance, lyap.max_increase))

    records: list[ResidualRecord] = []
    if opts.enable_residuals and len(traj) >= 3:
        battery = default_battery(traj)[: opts.battery_size]
        idx = _sample_interior_indices(len(traj), opts.residual_sample)
        for k in idx:
            for zid, zeta in battery:
                records.append(gradient_flow_residual(
                    traj, fnl, zeta, int(k), zid, richardson=opts.richardson))
        res_q = float(np.quantile([r.residual for r in records],
                                  opts.residual_quantile))
        gap_q = float(np.quantile([r.rhs_gap for r in records],
                                  opts.residual_quantile))
        checks.append(CheckResult("gradient_flow_identity",
                                  "pass" if res_q <= opts.residual_tol else "fail",
                                  opts.residual_tol, res_q))
        checks.append(CheckResult("rhs_assembly_agreement",
                                  "pass" if gap_q <= opts.residual_tol else "fail",
                                  opts.residual_tol, gap_q))

    balance = None
    total = None
    if opts.enable_dissipation and len(traj) >= 2:
        balance = dissipation_identity(traj, fnl, rates=rates)
        total = dissipation_integral(traj, fnl, rates=rates)
        scale = max(1.0, float(np.abs(energies).max()))
        abs_gap = abs(balance[0] - balance[1])
        if balance[2] <= opts.dissipation_tol:
            checks.append(CheckResult("dissipation_identity", "pass",
                                      opts.dissipation_tol, balance[2]))
        elif abs_gap <= 1e-5 * scale:
            # energy drop ~ 0: the identity holds in the absolute sense only
            checks.append(CheckResult("dissipation_identity", "pass",
                                      1e-5 * scale, abs_gap))
        else:
            checks.append(CheckResult("dissipation_identity", "info",
                                      opts.dissipation_tol, balance[2]))
        checks.append(CheckResult("dissipation_integral_finite",
                                  "pass" if math.isfinite(total) else "fail",
                                  math.inf, total))

    ladder = None
    if opts.enable_ladder and len(traj) >= 3:
        ladder = g_membership_ladder(traj, fnl, opts.ladder_counts, opts.ladder_times)
        checks.append(CheckResult("gradient_subspace_monotone",
                                  "pass" if ladder.monotone else "fail",
                                  0.0, float(ladder.residuals[:, -1].max())))

    if opts.compare_stationary:
        target = stationary if stationary is not None \
            else fnl.stationary_state(traj.grid)
        u_inf = target.density
        final = traj.states[-1]
        l1 = float(np.abs(final.values - u_inf.values).sum() * final.grid.cell_volume)
        checks.append(CheckResult("stationary_l1_gap",
                                  "pass" if l1 <= opts.stationary_l1_tol else "fail",
                                  opts.stationary_l1_tol, l1))
        grad_inf = fnl.gradient_field(u_inf, check_domain=False)
        # one decade above the clamp floor: keeps stencils off clamped cells
        mask = u_inf.support_mask(floor_rel=1e-11)
        sup = 0.0
        for c in grad_inf.components:
            sup = max(sup, float(np.abs(np.where(mask, c, 0.0)).max()))
        checks.append(CheckResult("stationary_gradient_sup",
                                  "pass" if sup <= opts.stationary_grad_tol else "fail",
                                  opts.stationary_grad_tol, sup))

    return VerificationReport(
        times=np.asarray(traj.times),
        energies=energies,
        dissipation=rates,
        residual_records=records,
        lyapunov=lyap,
        dissipation_balance=balance,
        dissipation_total=total,
        ladder=ladder,
        checks=checks,
    )
