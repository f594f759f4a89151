"""Closed-form reference solutions used as oracles.

Barenblatt profile of the degenerate diffusion du/dt = lap(u^m), m > 1:

    U(t, x) = t^{-alpha} (C - kappa |x|^2 t^{-2 beta})_+^{1/(m-1)},
    alpha = d / (d (m-1) + 2),  beta = alpha / d,  kappa = alpha (m-1) / (2 m d),

with C fixed by unit mass through Beta-function normalization (1D and 2D
closed forms).  The profile is validated numerically by a centered-residual
oracle rather than trusted: |dU/dt - lap(U^m)| inside the support must vanish
under refinement.

Also: exact cell-averaged Gaussians (heat kernels) via erf differences, and
the Gibbs-type equilibrium delegated to the energy module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, gammaln

from .grid import DensityField, Grid

__all__ = [
    "BarenblattProfile",
    "DomainTooSmallError",
    "barenblatt",
    "gaussian_field",
    "heat_kernel",
    "gibbs_state",
]


class DomainTooSmallError(ValueError):
    """The profile support does not fit inside the grid margins."""


@dataclass(frozen=True)
class BarenblattProfile:
    """Self-similar source solution parameters for exponent m in dimension d."""

    m: float
    dim: int
    alpha: float
    beta_exp: float
    kappa: float
    c_mass: float

    @classmethod
    def create(cls, m: float, dim: int) -> "BarenblattProfile":
        if m <= 1:
            raise ValueError("Barenblatt profiles need m > 1")
        if dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        alpha = dim / (dim * (m - 1.0) + 2.0)
        beta_exp = alpha / dim
        kappa = alpha * (m - 1.0) / (2.0 * m * dim)
        p = 1.0 / (m - 1.0)
        if dim == 1:
            # mass = C^{p+1/2} kappa^{-1/2} * sqrt(pi) Gamma(p+1)/Gamma(p+3/2)
            log_shape = 0.5 * math.log(math.pi) + gammaln(p + 1.0) - gammaln(p + 1.5)
            log_c = (0.5 * math.log(kappa) - log_shape) / (p + 0.5)
        else:
            # mass = pi * C^{p+1} / (kappa (p+1))
            log_c = (math.log(kappa) + math.log(p + 1.0) - math.log(math.pi)) / (p + 1.0)
        return cls(m, dim, alpha, beta_exp, kappa, math.exp(log_c))

    def value(self, t: float, *coords) -> np.ndarray:
        if t <= 0:
            raise ValueError("profile defined for t > 0")
        r2 = np.zeros_like(np.asarray(coords[0], dtype=float))
        for c in coords:
            r2 = r2 + np.asarray(c, dtype=float) ** 2
        arg = self.c_mass - self.kappa * r2 * t ** (-2.0 * self.beta_exp)
        return t ** (-self.alpha) * np.maximum(arg, 0.0) ** (1.0 / (self.m - 1.0))

    def support_radius(self, t: float) -> float:
        return math.sqrt(self.c_mass / self.kappa) * t ** self.beta_exp


def _cell_average(grid: Grid, func, gl_order: int = 8) -> np.ndarray:
    """Per-cell Gauss-Legendre averages of a pointwise function on the grid."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(gl_order)
    if grid.dim == 1:
        h = grid.spacing[0]
        centers = grid.axis(0)
        pts = centers[:, None] + 0.5 * h * gl_x[None, :]
        return 0.5 * (func(pts) @ gl_w)
    hx, hy = grid.spacing
    cx, cy = grid.axis(0), grid.axis(1)
    px = cx[:, None] + 0.5 * hx * gl_x[None, :]
    py = cy[:, None] + 0.5 * hy * gl_x[None, :]
    X = px[:, None, :, None]
    Y = py[None, :, None, :]
    vals = func(np.broadcast_to(X, (len(cx), len(cy), gl_order, gl_order)),
                np.broadcast_to(Y, (len(cx), len(cy), gl_order, gl_order)))
    return 0.25 * np.einsum("ijkl,k,l->ij", vals, gl_w, gl_w)


def barenblatt(profile: BarenblattProfile, t: float, grid: Grid,
               gl_order: int = 16, return_factor: bool = False):
    """Cell-averaged Barenblatt profile at time t, renormalized to unit mass.

    Raises if the support does not stay >= 3 cells away from every boundary;
    the renormalization factor must stay within 1e-4 of unity.
    """
    if grid.dim != profile.dim:
        raise ValueError("grid dimension does not match the profile")
    r0 = profile.support_radius(t)
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        lo = grid.origin[ax]
        hi = grid.origin[ax] + grid.extent[ax]
        if -r0 < lo + 3 * h or r0 > hi - 3 * h:
            raise DomainTooSmallError(
                f"support radius {r0:g} at t={t:g} leaves the margin on axis {ax}"
            )
    if grid.dim == 1:
        vals = _cell_average(grid, lambda x: profile.value(t, x), gl_order)
    else:
        vals = _cell_average(grid, lambda x, y: profile.value(t, x, y), gl_order)
    raw_mass = float(vals.sum() * grid.cell_volume)
    factor = 1.0 / raw_mass
    if abs(factor - 1.0) > 1e-4:
        raise ValueError(f"profile normalization factor {factor:.6g} off by "
                         f"more than 1e-4; refine the grid")
    field = DensityField(grid, vals * factor)
    return (field, factor) if return_factor else field


def gaussian_field(grid: Grid, mean, sigma) -> DensityField:
    """Exact cell averages of an isotropic Gaussian via erf differences."""
    mean_t = (float(mean),) * grid.dim if np.isscalar(mean) else tuple(map(float, mean))
    sig_t = (float(sigma),) * grid.dim if np.isscalar(sigma) else tuple(map(float, sigma))
    axes_int = []
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        edges = grid.origin[ax] + h * np.arange(grid.cells[ax] + 1)
        z = (edges - mean_t[ax]) / (sig_t[ax] * math.sqrt(2.0))
        cdf = 0.5 * (1.0 + erf(z))
        axes_int.append(np.diff(cdf) / h)
    if grid.dim == 1:
        vals = axes_int[0]
    else:
        vals = np.outer(axes_int[0], axes_int[1])
    return DensityField.from_values(grid, vals, normalize=True)


def heat_kernel(sigma: float, t: float, grid: Grid) -> DensityField:
    """Point-source solution of du/dt = sigma*lap(u): Gaussian, variance 2*sigma*t."""
    if t <= 0 or sigma <= 0:
        raise ValueError("heat kernel needs sigma > 0 and t > 0")
    return gaussian_field(grid, 0.0, math.sqrt(2.0 * sigma * t))


def gibbs_state(fnl, grid: Grid) -> DensityField:
    """Equilibrium profile of a confined functional (delegates to the energy)."""
    return fnl.stationary_state(grid).density
