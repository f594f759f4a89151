"""Energy functionals on densities and their measure-space gradients.

The energy of a density v is

    E(v) = int eta(v(x)) dx + int Phi(x) v(x) dx,

where the entropy density eta is built from the model coefficients through

    eta(r) = int_0^r g(s) ds,      g(s) = int_1^s beta'(w) / (w b(w)) dw.

Three modes:

  * classical_pme(m):  beta(r) = r^m, b = 1, Phi = 0.  Closed forms
        eta(r) = (r^m - m r)/(m - 1),   g(r) = m (r^{m-1} - 1)/(m - 1),
    and E(v) = (int v^m dx - m)/(m - 1) (the additive constant is kept).
  * general(beta, b, phi):  g is tabulated by per-segment Gauss-Legendre
    quadrature of beta'(e^t)/b(e^t) in t = log r on [1e-10, 1e4]; eta comes
    from the exact integration-by-parts identity
        eta(r) = r g(r) - int_0^r beta'(w)/b(w) dw,
    whose right integrand is smooth and bounded, so both factors are accurate
    to ~1e-12 without special handling of the integrable log singularity at 0.
  * matrix_diagonal(psi, b_diag, phi):  scalar reduction of divergence-form
    diffusion; formally the general mode with beta'/b replaced by psi,
    with the weight carried by b_diag.

The gradient of E in the b-weighted tangent geometry is the vector field

    b(v) * grad(g(v) + Phi)      (product form, the default; exactly zero at
                                  the stationary profile g^{-1}(c - Phi)), or
    grad(beta(v))/v - b(v) D     (quotient form, equal up to O(h^2) on the
                                  support; used for cross-checks).

Stationary states solve  int g^{-1}(c - Phi) dx = 1  for the constant c.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate as sp_integrate

from .grid import (
    DensityField,
    Grid,
    VectorFieldSample,
    gradient_of,
    integrate,
    lebesgue_integrate,
)
from .laws import Potential, ScalarLaw

__all__ = [
    "EnergyFunctional",
    "StationaryState",
    "DomainReport",
    "EnergyDomainError",
    "EnergyModeError",
    "NoConfinementError",
]

TABLE_RMIN = 1e-10
TABLE_RMAX = 1e4
FLOOR_REL = 1e-12          # support floor relative to max density
BLOWUP_THRESHOLD = 1e12    # absolute surrogate blow-up flag


class EnergyDomainError(ValueError):
    """Field is outside the domain where the requested quantity is defined."""


class EnergyModeError(ValueError):
    """Operation not available for this functional mode."""


class NoConfinementError(RuntimeError):
    """No normalizable stationary profile exists (potential not confining)."""


def _gauss_segments(t_nodes: np.ndarray, integrand, order: int = 10):
    """Cumulative integral over consecutive segments by fixed-order GL rule."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(order)
    a = t_nodes[:-1][:, None]
    b = t_nodes[1:][:, None]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = integrand(mid + half * gl_x[None, :])
    seg = (half[:, 0]) * (vals @ gl_w)
    return seg


def _gauss_partial(t0, t1, integrand, order: int = 10):
    """Vectorized GL integral from t0 to t1 (arrays of equal shape)."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(order)
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    mid = 0.5 * (t0 + t1)
    half = 0.5 * (t1 - t0)
    vals = integrand(mid[..., None] + half[..., None] * gl_x)
    return half * (vals @ gl_w)


class _GTable:
    """Monotone table of g (and its mass integral) in t = log r.

    Node values are cumulative Gauss-Legendre sums anchored at t = 0 where
    g(1) = 0; point evaluations add the exact partial segment, so g is
    machine-accurate and strictly increasing by construction.
    """

    def __init__(self, dgdt, rmin: float = TABLE_RMIN, rmax: float = TABLE_RMAX,
                 step: float = 0.02):
        # dgdt(t) = beta'(e^t)/b(e^t): the slope of g in log-density
        self.dgdt = dgdt
        tmin, tmax = math.log(rmin), math.log(rmax)
        n_neg = max(2, int(math.ceil(-tmin / step)))
        n_pos = max(2, int(math.ceil(tmax / step)))
        t = np.concatenate([np.linspace(tmin, 0.0, n_neg + 1)[:-1],
                            np.linspace(0.0, tmax, n_pos + 1)])
        self.t_nodes = t
        seg = _gauss_segments(t, dgdt)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        i0 = int(np.searchsorted(t, 0.0))
        self.g_nodes = cum - cum[i0]
        if np.any(np.diff(self.g_nodes) <= 0):
            raise EnergyDomainError("entropy slope g is not strictly increasing "
                                    "(beta' must be positive on (0, inf))")
        self.slope_min = float(dgdt(np.array([t[0]]))[0])
        self.slope_max = float(dgdt(np.array([t[-1]]))[0])
        # cumulative int_0^r eta''(w) w dw (integrand e^t dgdt(t) in t-space);
        # the [0, rmin] head is one GL panel of the smooth r-space integrand
        self._mass_integrand = lambda tt: np.exp(tt) * self.dgdt(tt)
        mass_seg = _gauss_segments(t, self._mass_integrand)
        head = float(_gauss_partial(np.zeros(1), np.full(1, rmin),
                                    lambda w: self.dgdt(np.log(np.maximum(w, 1e-300))))[0])
        self.mass_nodes = head + np.concatenate([[0.0], np.cumsum(mass_seg)])

    def mass_of_t(self, t):
        """int_0^{e^t} eta''(w) w dw at the clipped table range."""
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t_nodes[0], self.t_nodes[-1])
        idx = np.clip(np.searchsorted(self.t_nodes, tc, side="right") - 1,
                      0, len(self.t_nodes) - 2)
        out = self.mass_nodes[idx] + _gauss_partial(self.t_nodes[idx], tc,
                                                    self._mass_integrand)
        high = t > self.t_nodes[-1]
        if np.any(high):
            out = np.where(high, self.mass_nodes[-1]
                           + _gauss_partial(np.full_like(t, self.t_nodes[-1]),
                                            t, self._mass_integrand), out)
        return out

    def g_of_t(self, t):
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t_nodes[0], self.t_nodes[-1])
        idx = np.clip(np.searchsorted(self.t_nodes, tc, side="right") - 1,
                      0, len(self.t_nodes) - 2)
        base = self.g_nodes[idx]
        out = base + _gauss_partial(self.t_nodes[idx], tc, self.dgdt)
        # linear extrapolation in t with the edge slope outside the table
        low = t < self.t_nodes[0]
        high = t > self.t_nodes[-1]
        if np.any(low):
            out = np.where(low, self.g_nodes[0] + self.slope_min * (t - self.t_nodes[0]), out)
        if np.any(high):
            out = np.where(high, self.g_nodes[-1] + self.slope_max * (t - self.t_nodes[-1]), out)
        return out

    def t_of_g(self, y, rtol: float = 1e-12, max_iter: int = 60):
        """Invert g by bisection bracketing on the table refined with Newton."""
        y = np.asarray(y, dtype=float)
        t = np.interp(y, self.g_nodes, self.t_nodes)
        low = y < self.g_nodes[0]
        high = y > self.g_nodes[-1]
        if np.any(low):
            t = np.where(low, self.t_nodes[0]
                         + (y - self.g_nodes[0]) / max(self.slope_min, 1e-300), t)
        if np.any(high):
            t = np.where(high, self.t_nodes[-1]
                         + (y - self.g_nodes[-1]) / max(self.slope_max, 1e-300), t)
        t = np.clip(t, -745.0, 700.0)
        for _ in range(max_iter):
            g = self.g_of_t(t)
            slope = np.maximum(self.dgdt(t), 1e-300)
            dt = (g - y) / slope
            t = np.clip(t - dt, -745.0, 700.0)
            if np.max(np.abs(g - y) / np.maximum(1.0, np.abs(y))) <= rtol:
                break
        return t


@dataclass(frozen=True)
class StationaryState:
    """Equilibrium profile g^{-1}(c - Phi) together with its constant c."""

    c: float
    density: DensityField


@dataclass(frozen=True)
class DomainReport:
    """Discrete surrogates for membership in the energy/gradient domains."""

    sup_density: float
    log_moment: float            # int |v log v| dx
    gradient_surrogate: float    # int |grad(v^m)/v|^2 dnu (classical)
    #                              int |grad v / v|^2 dnu  (general)
    resolution_scale: float      # h^-2 reference scale for the surrogate
    in_energy_domain: bool
    in_gradient_domain: bool

    @property
    def member(self) -> bool:
        return self.in_energy_domain and self.in_gradient_domain


class EnergyFunctional:
    """Entropy + potential energy with curvature set by (beta, b) or psi."""

    def __init__(self, mode: str, *, m: Optional[float] = None,
                 beta: Optional[ScalarLaw] = None, b: Optional[ScalarLaw] = None,
                 phi: Optional[Potential] = None,
                 psi: Optional[ScalarLaw] = None, b_diag: Optional[ScalarLaw] = None):
        if mode not in ("classical_pme", "general", "matrix_diagonal"):
            raise EnergyModeError(f"unknown mode {mode!r}")
        self.mode = mode
        self.phi = phi if phi is not None else Potential.none()
        self._table: Optional[_GTable] = None
        if mode == "classical_pme":
            if m is None or m <= 1:
                raise ValueError("classical mode requires m > 1")
            self.m = float(m)
            self.beta = ScalarLaw.power(self.m)
            self.b = ScalarLaw.const(1.0)
            self.phi = Potential.none()
        elif mode == "general":
            if beta is None or b is None:
                raise ValueError("general mode requires beta and b")
            self.beta, self.b = beta, b
            self._table = _GTable(self._dgdt)
        else:
            if psi is None or b_diag is None:
                raise ValueError("matrix_diagonal mode requires psi and b_diag")
            self.psi, self.b = psi, b_diag
            self._table = _GTable(self._dgdt)

    # -- constructors --------------------------------------------------------
    @classmethod
    def classical(cls, m: float) -> "EnergyFunctional":
        return cls("classical_pme", m=m)

    @classmethod
    def general(cls, beta: ScalarLaw, b: ScalarLaw, phi: Potential) -> "EnergyFunctional":
        return cls("general", beta=beta, b=b, phi=phi)

    @classmethod
    def matrix_diagonal(cls, psi: ScalarLaw, b_diag: ScalarLaw,
                        phi: Potential) -> "EnergyFunctional":
        return cls("matrix_diagonal", psi=psi, b_diag=b_diag, phi=phi)

    # -- scalar building blocks ----------------------------------------------
    def _dgdt(self, t):
        """d g / d(log r): beta'(r)/b(r) in general mode, psi(r) in diagonal mode."""
        r = np.exp(np.asarray(t, dtype=float))
        if self.mode == "matrix_diagonal":
            return self.psi.evaluate(r)
        return self.beta.derivative(r) / self.b.evaluate(r)

    def _mass_slope(self, r):
        """eta''(r) * r = d g / d(log r) expressed in r."""
        r = np.asarray(r, dtype=float)
        if self.mode == "matrix_diagonal":
            return self.psi.evaluate(r)
        return self.beta.derivative(r) / self.b.evaluate(r)

    def g_of(self, r):
        """g(r) = eta'(r); strictly increasing on (0, inf), g(1) = 0."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0.0):
            raise EnergyDomainError("g is defined for positive densities only")
        if self.mode == "classical_pme":
            m = self.m
            out = m * (r ** (m - 1.0) - 1.0) / (m - 1.0)
        else:
            out = self._table.g_of_t(np.log(r))
        return float(out) if np.isscalar(r) or out.ndim == 0 else out

    def g_inverse(self, y):
        """Inverse of g, extended by 0 below the range (compact equilibria)."""
        y = np.asarray(y, dtype=float)
        if self.mode == "classical_pme":
            m = self.m
            arg = np.maximum(1.0 + (m - 1.0) * y / m, 0.0)
            out = arg ** (1.0 / (m - 1.0))
        else:
            out = np.exp(self._table.t_of_g(y))
        return float(out) if np.isscalar(y) or out.ndim == 0 else out

    def eta(self, r):
        """Entropy density eta(r) = r g(r) - int_0^r eta''(w) w dw, eta(0) = 0."""
        scalar = np.isscalar(r)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < 0.0):
            raise EnergyDomainError("eta is defined for nonnegative densities")
        if self.mode == "classical_pme":
            m = self.m
            out = (r ** m - m * r) / (m - 1.0)
        else:
            out = np.zeros_like(r)
            pos = r > 0.0
            if np.any(pos):
                rp = r[pos]
                out[pos] = rp * self.g_of(rp) - self._mass_integral(rp)
        return float(out[0]) if scalar else out

    def _mass_integral(self, r):
        """int_0^r eta''(w) w dw with a smooth bounded integrand."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        small = r < TABLE_RMIN
        if np.any(small):
            # below the table: single GL panel of the smooth r-space integrand
            out[small] = _gauss_partial(np.zeros(small.sum()), r[small],
                                        self._mass_slope)
        big = ~small
        if np.any(big):
            out[big] = self._table.mass_of_t(np.log(r[big]))
        return out

    # -- field-level quantities ------------------------------------------------
    def _phi_values(self, grid: Grid) -> np.ndarray:
        return self.phi.value(*grid.meshes())

    def energy_value(self, field: DensityField) -> float:
        """E(v) = int eta(v) dx + int Phi v dx over the grid."""
        v = field.values
        if self.mode == "classical_pme":
            return float((lebesgue_integrate(field.grid, v ** self.m) - self.m)
                         / (self.m - 1.0))
        entropy = lebesgue_integrate(field.grid, self.eta(v))
        potential = integrate(field, self._phi_values(field.grid))
        return entropy + potential

    def membership(self, field: DensityField) -> DomainReport:
        """Discrete surrogates for the domain conditions; never raises.

        The squared relative gradient uses central differences in the bulk; at
        support-boundary cells (a sub-floor neighbor) the steeper one-sided
        slope is taken instead, so concentrated spikes cannot hide behind the
        symmetry of the central stencil.
        """
        v = field.values
        grid = field.grid
        floor = FLOOR_REL * max(float(v.max()), 1e-300)
        vpos = np.maximum(v, floor)
        with np.errstate(divide="ignore", invalid="ignore"):
            vlogv = np.where(v > 0.0, v * np.log(vpos), 0.0)
        log_moment = lebesgue_integrate(grid, np.abs(vlogv))
        target = v ** self.m if self.mode == "classical_pme" else v
        num = gradient_of(target, grid)
        sub = v < floor
        quot_sq = np.zeros(grid.shape)
        mask = ~sub
        for ax in range(grid.dim):
            comp = np.abs(num.components[ax])
            h = grid.spacing[ax]
            fwd = np.abs(np.diff(target, axis=ax, append=np.take(
                target, [-1], axis=ax))) / h
            bwd = np.abs(np.diff(target, axis=ax, prepend=np.take(
                target, [0], axis=ax))) / h
            edge = mask & (np.roll(sub, 1, axis=ax) | np.roll(sub, -1, axis=ax))
            comp = np.where(edge, np.maximum(comp, np.maximum(fwd, bwd)), comp)
            quot_sq += np.where(mask, (comp / vpos) ** 2, 0.0)
        grad_surrogate = integrate(field, quot_sq)
        h = min(grid.spacing)
        resolution_scale = 1.0 / h ** 2
        fin = (math.isfinite(log_moment) and math.isfinite(grad_surrogate)
               and log_moment < BLOWUP_THRESHOLD)
        grad_ok = (math.isfinite(grad_surrogate)
                   and grad_surrogate < BLOWUP_THRESHOLD
                   and grad_surrogate < 0.05 * resolution_scale)
        return DomainReport(
            sup_density=float(v.max()),
            log_moment=log_moment,
            gradient_surrogate=grad_surrogate,
            resolution_scale=resolution_scale,
            in_energy_domain=fin,
            in_gradient_domain=grad_ok,
        )

    def b_values(self, field: DensityField) -> np.ndarray:
        return self.b.evaluate(field.values)

    def weight_values(self, field: DensityField) -> np.ndarray:
        """Metric weight 1/b(v) of the weighted tangent inner product."""
        return 1.0 / self.b_values(field)

    def potential_plus_g(self, field: DensityField) -> np.ndarray:
        """g(v) + Phi with g clamped at the support floor."""
        v = field.values
        floor = FLOOR_REL * max(float(v.max()), 1e-300)
        return self.g_of(np.maximum(v, floor)) + self._phi_values(field.grid)

    def gradient_field(self, field: DensityField, form: str = "product",
                       check_domain: bool = True) -> VectorFieldSample:
        """Measure-space gradient of E at the field, as a grid vector field.

        form="product": b(v) grad(g(v) + Phi), the canonical weighted-gradient
        expression; exactly zero (discretely) at a stationary profile.
        form="quotient": grad(beta(v))/v - b(v) D, replaced by the product form
        below the support floor.  Outside the support both are reported but
        carry no measure weight in any norm computed against the density.
        """
        if check_domain:
            report = self.membership(field)
            if not report.member:
                raise EnergyDomainError(
                    "field outside the gradient domain: "
                    f"surrogate={report.gradient_surrogate:.3g} "
                    f"(limit {min(BLOWUP_THRESHOLD, 0.05 * report.resolution_scale):.3g})"
                )
        grid = field.grid
        v = field.values
        bvals = self.b_values(field)
        product = gradient_of(self.potential_plus_g(field), grid)
        if form == "product":
            return VectorFieldSample(grid, tuple(bvals * c for c in product.components))
        if form != "quotient":
            raise ValueError(f"unknown gradient form {form!r}")
        floor = FLOOR_REL * max(float(v.max()), 1e-300)
        vpos = np.maximum(v, floor)
        if self.mode == "matrix_diagonal":
            num = gradient_of(v, grid)
            diffusive = tuple(self.psi.evaluate(v) * bvals * c / vpos
                              for c in num.components)
        else:
            num = gradient_of(self.beta.evaluate(v), grid)
            diffusive = tuple(c / vpos for c in num.components)
        drift = self.phi.drift(*grid.meshes())
        mask = v >= floor
        comps = tuple(
            np.where(mask, dcomp - bvals * Dcomp, bvals * pcomp)
            for dcomp, Dcomp, pcomp in zip(diffusive, drift, product.components)
        )
        return VectorFieldSample(grid, comps)

    def dissipation_rate(self, field: DensityField) -> float:
        """Squared weighted norm of the gradient: int b(v) v |grad(g(v)+Phi)|^2 dx."""
        grad = self.gradient_field(field, check_domain=False)
        w = self.weight_values(field)
        sq = np.zeros(field.grid.shape)
        for c in grad.components:
            sq += c * c
        return float((w * sq * field.values).sum() * field.grid.cell_volume)

    def stationary_state(self, grid: Grid, mass_tol: float = 1e-10,
                         c_bounds: tuple[float, float] = (-1e6, 1e6)) -> StationaryState:
        """Solve int g^{-1}(c - Phi) dx = 1 for c by bracketing bisection."""
        if self.mode == "classical_pme":
            raise EnergyModeError("stationary profiles require the general or "
                                  "diagonal mode with a confining potential")
        if not self.phi.is_confining:
            raise NoConfinementError("potential is not confining; no "
                                     "normalizable stationary profile")
        phi_vals = self._phi_values(grid)

        def mass(c: float) -> float:
            return lebesgue_integrate(grid, self.g_inverse(c - phi_vals))

        lo, hi = c_bounds
        # expand a sane initial bracket around g(1/|domain|) + min Phi
        c0 = float(self.g_of(1.0 / (grid.cell_volume * grid.n_cells))
                   + phi_vals.min())
        step = 1.0
        clo, chi = c0, c0
        while mass(clo) > 1.0 and clo > lo:
            clo -= step
            step *= 2.0
        step = 1.0
        while mass(chi) < 1.0 and chi < hi:
            chi += step
            step *= 2.0
        if not (mass(clo) <= 1.0 <= mass(chi)):
            raise NoConfinementError(f"no normalization constant in [{lo:g}, {hi:g}]")
        for _ in range(200):
            mid = 0.5 * (clo + chi)
            m = mass(mid)
            if abs(m - 1.0) <= mass_tol:
                clo = chi = mid
                break
            if m < 1.0:
                clo = mid
            else:
                chi = mid
        c = 0.5 * (clo + chi)
        vals = self.g_inverse(c - phi_vals)
        return StationaryState(c=c, density=DensityField.from_values(grid, vals))
