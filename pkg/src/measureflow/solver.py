"""Conservative finite-volume time integration of du/dt = lap(beta(u)) - div(D b(u) u).

Fluxes live on cell faces with zero-flux (reflecting) boundaries, so mass is
conserved to round-off:

    diffusive flux   (beta(u_R) - beta(u_L)) / h        (two-point, conservative,
                                                         well-defined at the
                                                         degenerate free boundary)
    drift flux       D_face * b(u)u                     upwind by default;
                                                        a centered average is
                                                        available for runs that
                                                        need second-order drift
                                                        and satisfy the cell
                                                        Peclet condition.

Schemes: explicit Euler under the CFL bound

    dt = safety * min( h^2 / (2 dim max beta'(u)),  h / (max|D| max|(b(u)u)'|) ),

or a semi-implicit variant that lags beta' one step (one banded/sparse solve
per step), permitting dt ~ h while keeping exact conservation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import DensityField, Grid
from .laws import Potential, ScalarLaw

__all__ = [
    "ModelLaws",
    "SolverConfig",
    "Trajectory",
    "StepSizeError",
    "PositivityError",
    "DomainMarginError",
    "step",
    "cfl_dt",
    "integrate_path",
    "discrete_stationary_state",
]


class StepSizeError(ValueError):
    """dt exceeds the stability bound of the explicit scheme."""


class PositivityError(RuntimeError):
    """A cell went negative beyond round-off: the step size logic is broken."""


class DomainMarginError(RuntimeError):
    """Density reached the two outermost cell layers: the box is too small."""


@dataclass(frozen=True)
class ModelLaws:
    """Coefficient triple of the flow: diffusivity, mobility, potential."""

    beta: ScalarLaw
    b: ScalarLaw
    phi: Potential


@dataclass(frozen=True)
class SolverConfig:
    t0: float
    t1: float
    scheme: str = "explicit_euler"
    cfl_safety: float = 0.45
    max_dt: float = math.inf
    store_every: int = 1
    drift_flux: str = "upwind"
    positivity_clip_log: bool = False
    enforce_margin: bool = True

    def __post_init__(self):
        if self.t1 < self.t0 or self.t0 < 0:
            raise ValueError("need t1 >= t0 >= 0")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.scheme not in ("explicit_euler", "semi_implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.drift_flux not in ("upwind", "centered"):
            raise ValueError(f"unknown drift flux {self.drift_flux!r}")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")


@dataclass
class Trajectory:
    """Stored snapshots of a run plus per-step diagnostics."""

    times: np.ndarray
    states: list
    diagnostics: dict
    meta: dict

    @property
    def grid(self) -> Grid:
        return self.states[0].grid

    def state_at(self, index: int) -> DensityField:
        return self.states[index]

    def __len__(self) -> int:
        return len(self.states)


# ---------------------------------------------------------------------------
# face geometry helpers
# ---------------------------------------------------------------------------

def _face_coords(grid: Grid, ax: int):
    """Coordinates of the interior+boundary faces orthogonal to axis ax."""
    h = grid.spacing[ax]
    edges = grid.origin[ax] + h * np.arange(grid.cells[ax] + 1)
    if grid.dim == 1:
        return (edges,)
    other = grid.axis(1 - ax)
    if ax == 0:
        return np.meshgrid(edges, other, indexing="ij")
    return np.meshgrid(grid.axis(0), edges, indexing="ij")


def _drift_at_faces(grid: Grid, phi: Potential, ax: int) -> np.ndarray:
    """Normal drift component -dPhi/dx_ax evaluated at face centers."""
    coords = _face_coords(grid, ax)
    return phi.drift(*coords)[ax]


def _axis_flux(u: np.ndarray, beta_u: np.ndarray, bu: np.ndarray,
               d_face: np.ndarray, h: float, ax: int, drift_flux: str) -> np.ndarray:
    """Total face flux  d beta(u)/dn - D_n b(u)u  along one axis (zero at walls)."""
    n = u.shape[ax]
    sl_lo = [slice(None)] * u.ndim
    sl_hi = [slice(None)] * u.ndim
    sl_lo[ax] = slice(0, n - 1)
    sl_hi[ax] = slice(1, n)
    b_lo, b_hi = beta_u[tuple(sl_lo)], beta_u[tuple(sl_hi)]
    diffusive = (b_hi - b_lo) / h
    # interior faces of d_face: drop the two wall faces along ax
    sl_faces = [slice(None)] * u.ndim
    sl_faces[ax] = slice(1, n)
    d_interior = d_face[tuple(sl_faces)]
    bu_lo, bu_hi = bu[tuple(sl_lo)], bu[tuple(sl_hi)]
    if drift_flux == "upwind":
        bu_face = np.where(d_interior > 0.0, bu_lo, bu_hi)
    else:
        bu_face = 0.5 * (bu_lo + bu_hi)
    flux_int = diffusive - d_interior * bu_face
    pad_shape = list(u.shape)
    pad_shape[ax] = 1
    zero = np.zeros(pad_shape)
    return np.concatenate([zero, flux_int, zero], axis=ax)


def _flux_divergence(u: np.ndarray, grid: Grid, laws: ModelLaws,
                     drift_flux: str) -> np.ndarray:
    beta_u = laws.beta.evaluate(u)
    bu = laws.b.evaluate(u) * u
    out = np.zeros_like(u)
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        d_face = _drift_at_faces(grid, laws.phi, ax)
        flux = _axis_flux(u, beta_u, bu, d_face, h, ax, drift_flux)
        n = u.shape[ax]
        sl_hi = [slice(None)] * u.ndim
        sl_lo = [slice(None)] * u.ndim
        sl_hi[ax] = slice(1, n + 1)
        sl_lo[ax] = slice(0, n)
        out += (flux[tuple(sl_hi)] - flux[tuple(sl_lo)]) / h
    return out


# ---------------------------------------------------------------------------
# CFL bound
# ---------------------------------------------------------------------------

def _stability_bound(field: DensityField, laws: ModelLaws,
                     drift_only: bool = False) -> float:
    grid = field.grid
    u = field.values
    h = min(grid.spacing)
    bounds = []
    if not drift_only:
        max_dbeta = float(laws.beta.derivative(u).max())
        if max_dbeta > 0:
            bounds.append(h * h / (2.0 * grid.dim * max_dbeta))
    coords = grid.meshes()
    max_drift = max(float(np.abs(d).max()) for d in laws.phi.drift(*coords))
    mobility_slope = float(np.abs(laws.b.evaluate(u) + u * laws.b.derivative(u)).max())
    if max_drift * mobility_slope > 0:
        bounds.append(h / (max_drift * mobility_slope))
    return min(bounds) if bounds else math.inf


def cfl_dt(field: DensityField, laws: ModelLaws, safety: float = 0.45,
           max_dt: float = math.inf) -> float:
    """Stable step: safety * min(diffusive bound, drift bound) over realized u."""
    bound = _stability_bound(field, laws)
    if not math.isfinite(bound):
        return max_dt
    return safety * bound


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def step(field: DensityField, laws: ModelLaws, dt: float,
         drift_flux: str = "upwind", clip: bool = False) -> DensityField:
    """One explicit conservative step; raises on CFL violation or negativity."""
    if dt <= 0:
        raise StepSizeError("dt must be positive")
    hard = _stability_bound(field, laws)
    if dt > hard * (1.0 + 1e-9):
        raise StepSizeError(f"dt={dt:g} exceeds the stability bound {hard:g}")
    u = field.values
    new = u + dt * _flux_divergence(u, field.grid, laws, drift_flux)
    if new.min() < -1e-14:
        raise PositivityError(f"negative density {new.min():.3g} after step")
    if clip:
        new = np.maximum(new, 0.0)
    return DensityField(field.grid, new)


def _semi_implicit_matrix(grid: Grid, dbeta: np.ndarray, dt: float):
    """I - dt * L_{beta'} with L the zero-flux flux-divergence of beta'(u^n) w."""
    if grid.dim == 1:
        n = grid.cells[0]
        h = grid.spacing[0]
        r = dt / (h * h)
        diag = np.ones(n)
        lower = np.zeros(n - 1)
        upper = np.zeros(n - 1)
        faces = np.ones(n - 1)  # interior faces present between i and i+1
        diag[:-1] += r * dbeta[:-1] * faces
        diag[1:] += r * dbeta[1:] * faces
        upper -= r * dbeta[1:]
        lower -= r * dbeta[:-1]
        ab = np.zeros((3, n))
        ab[0, 1:] = upper
        ab[1, :] = diag
        ab[2, :-1] = lower
        return ("banded", ab)
    nx, ny = grid.cells
    hx, hy = grid.spacing
    N = nx * ny
    idx = np.arange(N).reshape(nx, ny)
    rows, cols, vals = [], [], []
    diag = np.ones(N)
    d = dbeta.reshape(nx, ny)
    for ax, h in ((0, hx), (1, hy)):
        r = dt / (h * h)
        if ax == 0:
            left, right = idx[:-1, :].ravel(), idx[1:, :].ravel()
            dl, dr = d[:-1, :].ravel(), d[1:, :].ravel()
        else:
            left, right = idx[:, :-1].ravel(), idx[:, 1:].ravel()
            dl, dr = d[:, :-1].ravel(), d[:, 1:].ravel()
        np.add.at(diag, left, r * dl)
        np.add.at(diag, right, r * dr)
        rows.extend([left, right])
        cols.extend([right, left])
        vals.extend([-r * dr, -r * dl])
    rows_all = np.concatenate(rows)
    cols_all = np.concatenate(cols)
    vals_all = np.concatenate(vals)
    M = sp.csc_matrix((np.concatenate([diag, vals_all]),
                       (np.concatenate([np.arange(N), rows_all]),
                        np.concatenate([np.arange(N), cols_all]))), shape=(N, N))
    return ("sparse", M)


def _semi_implicit_step(field: DensityField, laws: ModelLaws, dt: float,
                        drift_flux: str) -> DensityField:
    grid = field.grid
    u = field.values
    rhs = dt * _flux_divergence(u, grid, laws, drift_flux)
    kind, M = _semi_implicit_matrix(grid, laws.beta.derivative(u).ravel(), dt)
    if kind == "banded":
        delta = sla.solve_banded((1, 1), M, rhs.ravel())
    else:
        delta = spla.spsolve(M, rhs.ravel())
    new = u + delta.reshape(grid.shape)
    if new.min() < -1e-13:
        raise PositivityError(f"negative density {new.min():.3g} after implicit step")
    return DensityField(grid, new)


def integrate_path(u0: DensityField, laws: ModelLaws, cfg: SolverConfig,
                   observers: Sequence[Callable] = ()) -> Trajectory:
    """March from t0 to t1 with adaptive dt, storing every `store_every` steps.

    Enforces the truncation-margin assertion (density < 1e-10 in the two
    outermost layers) at every step and records mass / extrema diagnostics.
    Observers are called with (time, state) at every stored snapshot.
    """
    if abs(u0.mass - 1.0) > 1e-8:
        raise ValueError(f"initial field not normalized: mass={u0.mass!r}")
    state = u0
    t = cfg.t0
    times = [t]
    states = [state]
    steps_t, steps_dt, steps_mass, steps_drift = [], [], [], []
    steps_min, steps_max = [], []
    prev_mass = state.mass
    if cfg.enforce_margin and not state.check_margin():
        raise DomainMarginError("initial density violates the boundary margin")
    for obs in observers:
        obs(t, state)
    n_step = 0
    dts_used = []
    while t < cfg.t1 - 1e-15 * max(1.0, cfg.t1):
        if cfg.scheme == "explicit_euler":
            dt = cfl_dt(state, laws, cfg.cfl_safety, cfg.max_dt)
        else:
            dt = _stability_bound(state, laws, drift_only=True)
            dt = cfg.max_dt if not math.isfinite(dt) else cfg.cfl_safety * dt
            dt = min(dt, cfg.max_dt)
        if not math.isfinite(dt) or dt <= 0:
            raise StepSizeError("no finite positive step available; set max_dt")
        dt = min(dt, cfg.t1 - t)
        if cfg.scheme == "explicit_euler":
            state = step(state, laws, dt, cfg.drift_flux, clip=cfg.positivity_clip_log)
        else:
            state = _semi_implicit_step(state, laws, dt, cfg.drift_flux)
        t += dt
        n_step += 1
        dts_used.append(dt)
        if cfg.enforce_margin and not state.check_margin():
            raise DomainMarginError(f"density reached the boundary margin at t={t:g}")
        mass = state.mass
        steps_t.append(t)
        steps_dt.append(dt)
        steps_mass.append(mass)
        steps_drift.append(mass - prev_mass)
        steps_min.append(float(state.values.min()))
        steps_max.append(float(state.values.max()))
        prev_mass = mass
        if n_step % cfg.store_every == 0 or t >= cfg.t1 - 1e-15 * max(1.0, cfg.t1):
            if times[-1] != t:
                times.append(t)
                states.append(state)
                for obs in observers:
                    obs(t, state)
    diagnostics = {
        "t": np.asarray(steps_t),
        "dt": np.asarray(steps_dt),
        "mass": np.asarray(steps_mass),
        "mass_drift": np.asarray(steps_drift),
        "min_u": np.asarray(steps_min),
        "max_u": np.asarray(steps_max),
    }
    meta = {
        "scheme": cfg.scheme,
        "drift_flux": cfg.drift_flux,
        "h": min(u0.grid.spacing),
        "dt_typical": float(np.median(dts_used)) if dts_used else 0.0,
        "store_every": cfg.store_every,
        "n_steps": n_step,
    }
    return Trajectory(np.asarray(times), states, diagnostics, meta)


# ---------------------------------------------------------------------------
# exact fixed point of the 1D discrete scheme (zero total flux at every face)
# ---------------------------------------------------------------------------

def discrete_stationary_state(laws: ModelLaws, grid: Grid,
                              drift_flux: str = "upwind",
                              tol: float = 1e-13) -> DensityField:
    """March the zero-flux face balance beta(u_R)-beta(u_L) = h D_f (bu)_face
    from the center outward and normalize; the result is a machine-accurate
    fixed point of `step`, used by smoke runs that require constant energy."""
    if grid.dim != 1:
        raise ValueError("discrete stationary profiles are 1D only")
    n = grid.cells[0]
    h = grid.spacing[0]
    d_face = np.asarray(_drift_at_faces(grid, laws.phi, 0)).ravel()

    def face_value(u_lo, u_hi, d):
        blo = laws.b.evaluate(u_lo) * u_lo
        bhi = laws.b.evaluate(u_hi) * u_hi
        if drift_flux == "upwind":
            return blo if d > 0 else bhi
        return 0.5 * (blo + bhi)

    def march(u_center: float) -> np.ndarray:
        u = np.zeros(n)
        mid = n // 2
        u[mid] = u_center
        for i in range(mid, n - 1):
            u[i + 1] = _solve_face(u[i], d_face[i + 1], laws, h, face_value)
        for i in range(mid, 0, -1):
            u[i - 1] = _solve_face_back(u[i], d_face[i], laws, h, face_value)
        return u

    def mass_of(u_center: float) -> float:
        return float(march(u_center).sum() * h)

    lo, hi = 1e-12, 1.0
    while mass_of(hi) < 1.0:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("no normalizable discrete profile found")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        m = mass_of(mid)
        if abs(m - 1.0) <= tol:
            lo = hi = mid
            break
        if m < 1.0:
            lo = mid
        else:
            hi = mid
    u = march(0.5 * (lo + hi))
    return DensityField.from_values(grid, u)


def _solve_face(u_left: float, d: float, laws: ModelLaws, h: float, face_value):
    """Solve beta(x) - beta(u_left) = h d face(u_left, x) for x (monotone)."""
    def f(x):
        return laws.beta.evaluate(x) - laws.beta.evaluate(u_left) \
            - h * d * face_value(u_left, x, d)
    return _monotone_root(f, u_left)


def _solve_face_back(u_right: float, d: float, laws: ModelLaws, h: float, face_value):
    def f(x):
        return laws.beta.evaluate(u_right) - laws.beta.evaluate(x) \
            - h * d * face_value(x, u_right, d)
    return _monotone_root(f, u_right)


def _monotone_root(f, guess: float) -> float:
    lo, hi = 0.0, max(guess, 1e-30)
    flo = f(lo)
    fhi = f(hi)
    it = 0
    while flo * fhi > 0:
        hi *= 2.0
        fhi = f(hi)
        it += 1
        if it > 200:
            return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or hi - lo < 1e-16 * max(1.0, hi):
            return mid
        if flo * fm <= 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)
