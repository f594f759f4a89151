"""Lifted differential geometry on densities: pushforward curves and probes.

The differentiable curves through a density nu are pushforwards under the
perturbed identity,

    mu_tau = nu o (Id + tau*phi)^{-1},     phi a square-integrable vector field,

with density  v(y) / |det D(Id + tau*phi)(y)|  at x = y + tau*phi(y).  Energy
differentials along these curves,

    diff E_nu(phi) = d/dtau E(mu_tau) |_{tau=0},

are computed here by central finite differences and serve as the independent
oracle for the closed-form gradient fields of the energy module.  The module
also provides:

  * cylinder functions F(nu) = f(nu(h_1), ..., nu(h_k)) with their exact
    gradients sum_i d_i f * grad h_i,
  * the determinant-derivative identities d/dtau det D(Id+tau*phi) = div phi
    (and -div phi for the inverse along the moved point), checked cell-wise,
  * least-squares projection onto the span of weighted gradient fields
    b(v) grad zeta, the subspace that contains the energy gradient.

Test profiles (compactly supported C^2 functions) come in two presets: mollifier
bumps and Gaussian-damped Hermite polynomials with a C^2 cutoff, both with
analytic gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import (
    DensityField,
    Grid,
    GridMismatchError,
    VectorFieldSample,
    gradient_of,
    integrate,
)
from .laws import ScalarLaw

__all__ = [
    "BumpProfile",
    "HermiteProfile",
    "CylinderFunction",
    "PushforwardCurve",
    "GradientSubspaceBasis",
    "CurveDomainError",
    "InversionError",
    "pushforward_density",
    "det_derivative_check",
    "DetDerivativeReport",
    "cylinder_value",
    "cylinder_gradient",
    "diff_energy_fd",
    "default_fd_step",
    "project_onto_G",
    "make_gradient_generators",
    "check_profile_support",
]


class CurveDomainError(ValueError):
    """tau outside the interval on which Id + tau*phi is a diffeomorphism."""


class InversionError(RuntimeError):
    """Fixed-point inversion of Id + tau*phi failed to converge."""


# ---------------------------------------------------------------------------
# test profiles (compactly supported C^2 functions with analytic gradients)
# ---------------------------------------------------------------------------

def _as_center(center, dim: int) -> tuple[float, ...]:
    if np.isscalar(center):
        return (float(center),) * dim
    return tuple(float(c) for c in center)


@dataclass(frozen=True)
class BumpProfile:
    """Smooth mollifier bump amplitude * exp(-1/(1 - |x-c|^2/R^2)) on its ball."""

    center: tuple[float, ...]
    radius: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("bump radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def support_radius(self) -> float:
        return self.radius

    def _s(self, coords) -> np.ndarray:
        s = np.zeros_like(np.asarray(coords[0], dtype=float))
        for c, c0 in zip(coords, self.center):
            s = s + ((np.asarray(c, dtype=float) - c0) / self.radius) ** 2
        return s

    def value(self, *coords) -> np.ndarray:
        s = self._s(coords)
        inside = s < 1.0 - 1e-12
        out = np.zeros_like(s)
        si = s[inside]
        out[inside] = self.amplitude * np.exp(-1.0 / (1.0 - si))
        return out

    def gradient(self, *coords) -> tuple[np.ndarray, ...]:
        s = self._s(coords)
        inside = s < 1.0 - 1e-12
        w = np.zeros_like(s)
        si = s[inside]
        w[inside] = self.amplitude * np.exp(-1.0 / (1.0 - si)) / (1.0 - si) ** 2
        grads = []
        for c, c0 in zip(coords, self.center):
            dx = np.asarray(c, dtype=float) - c0
            g = np.zeros_like(s)
            g[inside] = -2.0 * dx[inside] * w[inside] / self.radius ** 2
            grads.append(g)
        return tuple(grads)


def _hermite(order: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Hermite polynomial He_n and its derivative n*He_{n-1}."""
    if order == 1:
        return z, np.ones_like(z)
    if order == 2:
        return z * z - 1.0, 2.0 * z
    if order == 3:
        return z ** 3 - 3.0 * z, 3.0 * (z * z - 1.0)
    if order == 4:
        return z ** 4 - 6.0 * z * z + 3.0, 4.0 * (z ** 3 - 3.0 * z)
    raise ValueError("hermite orders 1..4 are supported")


def _smoothstep(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """C^2 quintic step 1 -> 0 on [0, 1] with vanishing first two derivatives."""
    xc = np.clip(x, 0.0, 1.0)
    val = 1.0 - xc ** 3 * (10.0 - 15.0 * xc + 6.0 * xc * xc)
    der = -30.0 * xc ** 2 * (xc - 1.0) ** 2
    return val, der


@dataclass(frozen=True)
class HermiteProfile:
    """He_n(z_1) * exp(-|z|^2/2) with a C^2 radial cutoff, z = (x - c)/scale.

    The cutoff is 1 for |z| <= 6 and 0 for |z| >= 8, which makes the profile
    compactly supported while perturbing it only at the 1e-8 level; values and
    gradients include the cutoff analytically so all identities are exact for
    the function actually used.  Output is normalized to unit sup norm.
    """

    order: int
    scale: float
    center: tuple[float, ...] = (0.0,)
    cut_lo: float = 6.0
    cut_hi: float = 8.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        zz = np.linspace(-self.cut_lo, self.cut_lo, 20001)
        he, _ = _hermite(self.order, zz)
        object.__setattr__(self, "_norm", float(np.abs(he * np.exp(-zz * zz / 2.0)).max()))

    @property
    def support_radius(self) -> float:
        return self.cut_hi * self.scale

    def _z(self, coords) -> tuple[list[np.ndarray], np.ndarray]:
        zs = [(np.asarray(c, dtype=float) - c0) / self.scale
              for c, c0 in zip(coords, self.center)]
        r2 = np.zeros_like(zs[0])
        for z in zs:
            r2 = r2 + z * z
        return zs, np.sqrt(r2)

    def value(self, *coords) -> np.ndarray:
        zs, rho = self._z(coords)
        he, _ = _hermite(self.order, zs[0])
        cut, _ = _smoothstep((rho - self.cut_lo) / (self.cut_hi - self.cut_lo))
        return he * np.exp(-rho * rho / 2.0) * cut / self._norm

    def gradient(self, *coords) -> tuple[np.ndarray, ...]:
        zs, rho = self._z(coords)
        he, dhe = _hermite(self.order, zs[0])
        gauss = np.exp(-rho * rho / 2.0)
        cut, dcut = _smoothstep((rho - self.cut_lo) / (self.cut_hi - self.cut_lo))
        dcut = dcut / (self.cut_hi - self.cut_lo)
        core = he * gauss
        safe_rho = np.where(rho > 1e-300, rho, 1.0)
        grads = []
        for j, z in enumerate(zs):
            # d/dz_j [He(z_1) exp(-rho^2/2)] = (He' delta_{j,0} - z_j He) exp(-rho^2/2)
            dcore = ((dhe if j == 0 else 0.0) - z * he) * gauss
            g = (dcore * cut + core * dcut * z / safe_rho) / (self.scale * self._norm)
            grads.append(g)
        return tuple(grads)


def check_profile_support(profile, grid: Grid, margin_cells: int = 3) -> None:
    """Require the profile's support to sit >= margin_cells inside the box."""
    for ax in range(grid.dim):
        h = grid.spacing[ax]
        lo = grid.origin[ax] + margin_cells * h
        hi = grid.origin[ax] + grid.extent[ax] - margin_cells * h
        c = profile.center[ax] if len(profile.center) > ax else profile.center[0]
        if c - profile.support_radius < lo or c + profile.support_radius > hi:
            raise ValueError(
                f"profile support [{c - profile.support_radius:g}, "
                f"{c + profile.support_radius:g}] leaves the interior margin "
                f"[{lo:g}, {hi:g}] on axis {ax}"
            )


def profile_field(profile, grid: Grid) -> np.ndarray:
    return profile.value(*grid.meshes())


def profile_gradient_field(profile, grid: Grid) -> VectorFieldSample:
    return VectorFieldSample(grid, profile.gradient(*grid.meshes()))


# ---------------------------------------------------------------------------
# cylinder functions F(nu) = f(nu(h_1), ..., nu(h_k))
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderFunction:
    """Finitely based function of a measure with bounded C^1 outer function.

    outer kinds: sin_sum  f(y) = sum c_i sin(y_i)
                 tanh_sum f(y) = sum c_i tanh(y_i)
                 poly_clipped f(y) = sum c_i y_i/(1 + y_i^2)
    """

    outer: str
    coeffs: tuple[float, ...]
    inner: tuple

    _OUTER = ("sin_sum", "tanh_sum", "poly_clipped")

    def __post_init__(self):
        if self.outer not in self._OUTER:
            raise ValueError(f"unknown outer preset {self.outer!r}")
        if len(self.inner) < 1:
            raise ValueError("cylinder functions need at least one test function")
        if len(self.coeffs) != len(self.inner):
            raise ValueError("one coefficient per test function required")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "inner", tuple(self.inner))

    def outer_value(self, y: np.ndarray) -> float:
        c = np.asarray(self.coeffs)
        if self.outer == "sin_sum":
            return float(np.sum(c * np.sin(y)))
        if self.outer == "tanh_sum":
            return float(np.sum(c * np.tanh(y)))
        return float(np.sum(c * y / (1.0 + y * y)))

    def outer_partials(self, y: np.ndarray) -> np.ndarray:
        c = np.asarray(self.coeffs)
        if self.outer == "sin_sum":
            return c * np.cos(y)
        if self.outer == "tanh_sum":
            return c / np.cosh(y) ** 2
        return c * (1.0 - y * y) / (1.0 + y * y) ** 2

    def moments(self, field: DensityField) -> np.ndarray:
        grid = field.grid
        for p in self.inner:
            check_profile_support(p, grid)
        return np.array([integrate(field, profile_field(p, grid)) for p in self.inner])


def cylinder_value(F: CylinderFunction, field: DensityField) -> float:
    return F.outer_value(F.moments(field))


def cylinder_gradient(F: CylinderFunction, field: DensityField) -> VectorFieldSample:
    """Exact gradient sum_i d_i f(nu(h)) grad h_i sampled on the grid."""
    grid = field.grid
    part = F.outer_partials(F.moments(field))
    comps = [np.zeros(grid.shape) for _ in range(grid.dim)]
    for w, p in zip(part, F.inner):
        g = p.gradient(*grid.meshes())
        for k in range(grid.dim):
            comps[k] += w * g[k]
    return VectorFieldSample(grid, tuple(comps))


# ---------------------------------------------------------------------------
# linear interpolation of cell data at off-grid points
# ---------------------------------------------------------------------------

def _interp_axis(grid: Grid, ax: int, x: np.ndarray):
    h = grid.spacing[ax]
    t = (np.asarray(x) - (grid.origin[ax] + 0.5 * h)) / h
    i0 = np.clip(np.floor(t).astype(int), 0, grid.cells[ax] - 2)
    w = np.clip(t - i0, 0.0, 1.0)
    return i0, w


def interp_linear(grid: Grid, array: np.ndarray, points) -> np.ndarray:
    """Multilinear interpolation of cell-center data, clamped at the hull."""
    if grid.dim == 1:
        (x,) = points
        i0, w = _interp_axis(grid, 0, x)
        return (1.0 - w) * array[i0] + w * array[i0 + 1]
    x, y = points
    i0, wx = _interp_axis(grid, 0, x)
    j0, wy = _interp_axis(grid, 1, y)
    v00 = array[i0, j0]
    v10 = array[i0 + 1, j0]
    v01 = array[i0, j0 + 1]
    v11 = array[i0 + 1, j0 + 1]
    return ((1 - wx) * (1 - wy) * v00 + wx * (1 - wy) * v10
            + (1 - wx) * wy * v01 + wx * wy * v11)


# ---------------------------------------------------------------------------
# pushforward curves
# ---------------------------------------------------------------------------

def _jacobian_arrays(phi: VectorFieldSample) -> list[list[np.ndarray]]:
    """Entries d phi_i / d x_j by central differences (one-sided at boundary)."""
    grid = phi.grid
    out = []
    for comp in phi.components:
        row = []
        for ax in range(grid.dim):
            order = 2 if grid.cells[ax] >= 3 else 1
            row.append(np.gradient(comp, grid.spacing[ax], axis=ax, edge_order=order))
        out.append(row)
    return out


def _jacobian_sup(phi: VectorFieldSample) -> float:
    jac = _jacobian_arrays(phi)
    best = 0.0
    for row in jac:
        total = np.zeros(phi.grid.shape)
        for entry in row:
            total += np.abs(entry)
        best = max(best, float(total.max()))
    return best


@dataclass(frozen=True)
class PushforwardCurve:
    """Curve tau -> nu o (Id + tau*phi)^{-1} through the base density."""

    base: DensityField
    direction: VectorFieldSample
    tau_max: float = 0.0

    def __post_init__(self):
        if self.direction.grid != self.base.grid:
            raise GridMismatchError("base and direction live on different grids")
        lip = _jacobian_sup(self.direction)
        object.__setattr__(self, "_lip", lip)
        cap = 0.8 / lip if lip > 0 else math.inf
        tau = self.tau_max if self.tau_max > 0 else cap
        if tau * lip >= 1.0:
            raise CurveDomainError(
                f"tau_max={tau:g} too large: |tau| sup|Dphi| = {tau * lip:g} >= 1"
            )
        object.__setattr__(self, "tau_max", min(tau, cap))

    @property
    def jacobian_sup(self) -> float:
        return self._lip


def _invert_map(curve: PushforwardCurve, tau: float,
                tol: float = 1e-12, max_iter: int = 200):
    """Solve y + tau*phi(y) = x at all cell centers by damped fixed point."""
    grid = curve.base.grid
    xs = grid.meshes()
    ys = [x.copy() for x in xs]
    damping = 0.5 if abs(tau) * curve.jacobian_sup > 0.5 else 1.0
    scale = max(1.0, max(float(np.abs(x).max()) for x in xs))
    for _ in range(max_iter):
        phi_y = [interp_linear(grid, c, ys) for c in curve.direction.components]
        res = 0.0
        new = []
        for x, y, p in zip(xs, ys, phi_y):
            target = x - tau * p
            new.append(y + damping * (target - y))
        ys = new
        phi_y = [interp_linear(grid, c, ys) for c in curve.direction.components]
        for x, y, p in zip(xs, ys, phi_y):
            res = max(res, float(np.abs(y + tau * p - x).max()))
        if res <= tol * scale:
            return ys
    raise InversionError(f"map inversion stalled at residual {res:.3g} "
                         f"after {max_iter} iterations")


def _det_at(grid: Grid, jac, tau: float, points) -> np.ndarray:
    """det(I + tau * Dphi) with Jacobian entries interpolated at the points."""
    if grid.dim == 1:
        a = interp_linear(grid, jac[0][0], points)
        return 1.0 + tau * a
    a = interp_linear(grid, jac[0][0], points)
    b = interp_linear(grid, jac[0][1], points)
    c = interp_linear(grid, jac[1][0], points)
    d = interp_linear(grid, jac[1][1], points)
    return (1.0 + tau * a) * (1.0 + tau * d) - tau * tau * b * c


def pushforward_density(curve: PushforwardCurve, tau: float,
                        return_factor: bool = False):
    """Density of the pushforward at signed time tau, renormalized to unit mass.

    Evaluates v(y) / det D(Id + tau*phi)(y) at the preimage y of each cell
    center; the preimage comes from a damped fixed-point iteration and the
    Jacobian from central differences of phi.  The renormalization factor is
    checked to stay within 10 h^2 of unity.
    """
    if abs(tau) > curve.tau_max:
        raise CurveDomainError(f"|tau|={abs(tau):g} exceeds tau_max={curve.tau_max:g}")
    grid = curve.base.grid
    if tau == 0.0:
        out = DensityField(grid, curve.base.values)
        return (out, 1.0) if return_factor else out
    ys = _invert_map(curve, tau)
    jac = _jacobian_arrays(curve.direction)
    det = _det_at(grid, jac, tau, ys)
    if det.min() <= 0.0:
        raise CurveDomainError("Id + tau*phi is not orientation preserving "
                               "on the grid at this tau")
    vals = interp_linear(grid, curve.base.values, ys) / det
    raw_mass = float(vals.sum() * grid.cell_volume)
    factor = 1.0 / raw_mass
    h = min(grid.spacing)
    if abs(factor - 1.0) > 10.0 * h * h:
        raise ValueError(f"pushforward renormalization factor {factor:.6g} "
                         f"outside 1 +/- 10 h^2 = {10 * h * h:.3g}")
    out = DensityField(grid, np.maximum(vals * factor, 0.0))
    return (out, factor) if return_factor else out


@dataclass(frozen=True)
class DetDerivativeReport:
    """Max deviations of the determinant derivatives from +/- div phi."""

    max_dev_forward: float
    max_dev_inverse: float
    h_tau: float


def _cubic_interpolator(grid: Grid, array: np.ndarray):
    """C^1 (spline) point evaluator of cell data; used where a linear
    interpolant's slope kink at the nodes would pollute tau-derivatives."""
    from scipy.interpolate import CubicSpline, RectBivariateSpline

    if grid.dim == 1:
        spl = CubicSpline(grid.axis(0), array)
        return lambda pts: spl(np.clip(pts[0], grid.axis(0)[0], grid.axis(0)[-1]))
    spl = RectBivariateSpline(grid.axis(0), grid.axis(1), array, kx=3, ky=3)
    ax0, ax1 = grid.axis(0), grid.axis(1)
    return lambda pts: spl.ev(np.clip(pts[0], ax0[0], ax0[-1]),
                              np.clip(pts[1], ax1[0], ax1[-1]))


def det_derivative_check(phi: VectorFieldSample, h_tau: float = 1e-5,
                         richardson: bool = False) -> DetDerivativeReport:
    """Differentiate tau -> det D(Id+tau*phi) (and its inverse along the moved
    point) at tau = 0 and compare against +/- div phi, cell-wise."""
    grid = phi.grid
    jac = _jacobian_arrays(phi)
    div = np.zeros(grid.shape)
    for k in range(grid.dim):
        div += jac[k][k]

    def det_fixed(tau: float) -> np.ndarray:
        if grid.dim == 1:
            return 1.0 + tau * jac[0][0]
        return ((1.0 + tau * jac[0][0]) * (1.0 + tau * jac[1][1])
                - tau * tau * jac[0][1] * jac[1][0])

    xs = grid.meshes()
    interp = [[_cubic_interpolator(grid, entry) for entry in row] for row in jac]

    def inv_det_moved(tau: float) -> np.ndarray:
        pts = tuple(x + tau * c for x, c in zip(xs, phi.components))
        if grid.dim == 1:
            return 1.0 / (1.0 + tau * interp[0][0](pts))
        a = interp[0][0](pts)
        b = interp[0][1](pts)
        c = interp[1][0](pts)
        d = interp[1][1](pts)
        return 1.0 / ((1.0 + tau * a) * (1.0 + tau * d) - tau * tau * b * c)

    def central(f: Callable[[float], np.ndarray], h: float) -> np.ndarray:
        return (f(h) - f(-h)) / (2.0 * h)

    def deriv(f: Callable[[float], np.ndarray]) -> np.ndarray:
        d = central(f, h_tau)
        if richardson:
            d = (4.0 * central(f, h_tau / 2.0) - d) / 3.0
        return d

    dev_fwd = float(np.abs(deriv(det_fixed) - div).max())
    dev_inv = float(np.abs(deriv(inv_det_moved) + div).max())
    return DetDerivativeReport(dev_fwd, dev_inv, h_tau)


# ---------------------------------------------------------------------------
# finite-difference energy differential
# ---------------------------------------------------------------------------

def default_fd_step(phi: VectorFieldSample) -> float:
    return 1e-4 / (1.0 + phi.sup_norm())


def diff_energy_fd(fnl, field: DensityField, phi: VectorFieldSample,
                   tau: Optional[float] = None, richardson: bool = False) -> float:
    """Central difference of tau -> E(pushforward(tau)) at 0: the independent
    oracle for the closed-form energy gradients."""
    if tau is None:
        tau = default_fd_step(phi)
    curve = PushforwardCurve(field, phi)
    if tau > curve.tau_max:
        raise CurveDomainError(f"fd step tau={tau:g} exceeds tau_max={curve.tau_max:g}")

    def slope(step: float) -> float:
        ep = fnl.energy_value(pushforward_density(curve, step))
        em = fnl.energy_value(pushforward_density(curve, -step))
        return (ep - em) / (2.0 * step)

    d = slope(tau)
    if richardson:
        d = (4.0 * slope(tau / 2.0) - d) / 3.0
    return d


# ---------------------------------------------------------------------------
# projection onto the closure of weighted gradient fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GradientSubspaceBasis:
    """Finite family b(v) grad zeta_j with its Gram matrix in the weighted
    inner product; spans an increasing approximation of the gradient subspace."""

    field: DensityField
    b_law: ScalarLaw
    generators: tuple
    gram: np.ndarray = dc_field(default=None)

    def __post_init__(self):
        grid = self.field.grid
        for p in self.generators:
            check_profile_support(p, grid)
        b_vals = self.b_law.evaluate(self.field.values)
        grads = [p.gradient(*grid.meshes()) for p in self.generators]
        k = len(self.generators)
        gram = np.zeros((k, k))
        # <b grad zi, b grad zj>_{b,nu} = int b(v) grad zi . grad zj dnu
        for i in range(k):
            for j in range(i, k):
                dot = np.zeros(grid.shape)
                for gi, gj in zip(grads[i], grads[j]):
                    dot += gi * gj
                gram[i, j] = gram[j, i] = integrate(self.field, b_vals * dot)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "_grads", grads)
        object.__setattr__(self, "_b_vals", b_vals)


def project_onto_G(basis: GradientSubspaceBasis,
                   target: VectorFieldSample) -> tuple[np.ndarray, float]:
    """Least squares onto span{b(v) grad zeta_j} in the weighted inner product.

    Solves the Tikhonov-shifted normal equations and returns the coefficients
    together with the weighted norm of the residual field.
    """
    field = basis.field
    grid = field.grid
    if target.grid != grid:
        raise GridMismatchError("target lives on a different grid")
    k = len(basis.generators)
    rhs = np.zeros(k)
    # <b grad zi, target>_{b,nu} = int grad zi . target dnu
    for i in range(k):
        dot = np.zeros(grid.shape)
        for g, t in zip(basis._grads[i], target.components):
            dot += g * t
        rhs[i] = integrate(field, dot)
    shift = 1e-12 * max(float(np.trace(basis.gram)), 0.0)
    A = basis.gram + shift * np.eye(k)
    try:
        coeffs = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        coeffs = np.linalg.lstsq(A, rhs, rcond=None)[0]
    resid = [t.copy() for t in target.components]
    for c, grads in zip(coeffs, basis._grads):
        for comp, g in zip(resid, grads):
            comp -= c * basis._b_vals * g
    weight = 1.0 / basis._b_vals
    sq = np.zeros(grid.shape)
    for comp in resid:
        sq += comp * comp
    res_norm = math.sqrt(max(float((weight * sq * field.values).sum()
                                   * grid.cell_volume), 0.0))
    return coeffs, res_norm


def make_gradient_generators(field: DensityField, count: int,
                             margin_cells: int = 4) -> tuple:
    """Nested generator ladder over the support of the density.

    The families for counts 4 <= n1 < n2 ... are prefixes of one fixed
    sequence (coarse bumps, damped Hermite profiles, then dyadically refined
    bump tilings), so projection residuals are monotone in the count.
    """
    grid = field.grid
    mask = field.support_mask(floor_rel=1e-8)
    bounds = []
    hard = []
    for ax in range(grid.dim):
        axis = grid.axis(ax)
        proj = mask.any(axis=tuple(a for a in range(grid.dim) if a != ax)) \
            if grid.dim > 1 else mask
        lo = float(axis[proj].min())
        hi = float(axis[proj].max())
        hard_lo = grid.origin[ax] + margin_cells * grid.spacing[ax]
        hard_hi = grid.origin[ax] + grid.extent[ax] - margin_cells * grid.spacing[ax]
        hard.append((hard_lo, hard_hi))
        bounds.append((max(lo, hard_lo), min(hi, hard_hi)))

    def cap_radius(centers_per_axis, desired: float) -> float:
        cap = desired
        for ax, centers in enumerate(centers_per_axis):
            cap = min(cap, min(c - hard[ax][0] for c in centers),
                      min(hard[ax][1] - c for c in centers))
        return 0.98 * cap

    def bump_lattice(n_per_axis: int) -> list:
        out = []
        if grid.dim == 1:
            lo, hi = bounds[0]
            span = hi - lo
            centers = np.linspace(lo + span / (2 * n_per_axis),
                                  hi - span / (2 * n_per_axis), n_per_axis)
            radius = cap_radius([centers], 1.5 * span / n_per_axis)
            for c in centers:
                out.append(BumpProfile((float(c),), float(radius)))
        else:
            (lox, hix), (loy, hiy) = bounds
            spans = (hix - lox, hiy - loy)
            cx = np.linspace(lox + spans[0] / (2 * n_per_axis),
                             hix - spans[0] / (2 * n_per_axis), n_per_axis)
            cy = np.linspace(loy + spans[1] / (2 * n_per_axis),
                             hiy - spans[1] / (2 * n_per_axis), n_per_axis)
            radius = cap_radius([cx, cy], 1.5 * min(spans) / n_per_axis)
            for a in cx:
                for b in cy:
                    out.append(BumpProfile((float(a), float(b)), float(radius)))
        return out

    center = tuple(0.5 * (lo + hi) for lo, hi in bounds)
    min_span = min(hi - lo for lo, hi in bounds)
    sequence: list = []
    if grid.dim == 1:
        sequence += bump_lattice(4)                     # 4
        sequence += [HermiteProfile(k, min_span / 16.0, center)
                     for k in range(1, 5)]              # 8
        sequence += bump_lattice(8)                     # 16
        sequence += bump_lattice(16)                    # 32
    else:
        sequence += bump_lattice(2)                     # 4
        sequence += [HermiteProfile(k, min_span / 16.0, center)
                     for k in range(1, 5)]              # 8
        sequence += bump_lattice(3)[:8]                 # 16 (8 of 9)
        sequence += bump_lattice(4)                     # 32
    if count > len(sequence):
        raise ValueError(f"generator ladder supports up to {len(sequence)}")
    return tuple(sequence[:count])
