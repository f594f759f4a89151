"""Uniform grids, cell-averaged densities, and discrete differential operators.

Probability densities are represented by their cell averages on a uniform
tensor grid over a box in 1D or 2D.  The box stands in for the whole space:
runs are only valid while the density stays below 1e-10 in the two outermost
cell layers (enforced by the solver).  All integrals are midpoint sums, i.e.
cell-average quadrature, so that every discrete identity used elsewhere is
consistent with the finite-volume fluxes.

Conventions:
    integrate(field, f)           = sum_i f_i * v_i * cellvol       (= nu(f))
    weighted_inner(field, w, a, b)= sum_i w_i (a_i . b_i) v_i * cellvol
    gradient_of / divergence_of   = second-order central differences,
                                    one-sided (second order) at the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Grid",
    "DensityField",
    "VectorFieldSample",
    "GridMismatchError",
    "integrate",
    "lebesgue_integrate",
    "weighted_inner",
    "gradient_of",
    "divergence_of",
]

MARGIN_DENSITY = 1e-10  # max density allowed in the two outermost cell layers
NONNEG_ATOL = 1e-13     # round-off tolerance for "nonnegative" cell values


class GridMismatchError(ValueError):
    """Arrays or fields do not share the same grid / shape."""


def _as_tuple(x, dim: int, name: str) -> tuple[float, ...]:
    if np.isscalar(x):
        return (float(x),) * dim
    t = tuple(float(v) for v in x)
    if len(t) != dim:
        raise ValueError(f"{name} must have length {dim}, got {len(t)}")
    return t


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on a box, dim in {1, 2}."""

    dim: int
    origin: tuple[float, ...]
    extent: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        for name in ("origin", "extent", "cells"):
            if len(getattr(self, name)) != self.dim:
                raise ValueError(f"{name} must have length dim={self.dim}")
        if any(n <= 0 for n in self.cells):
            raise ValueError("cells_per_axis must be positive")
        if any(e <= 0 for e in self.extent):
            raise ValueError("extent must be positive")

    @classmethod
    def line(cls, lo: float, hi: float, n: int) -> "Grid":
        return cls(1, (float(lo),), (float(hi) - float(lo),), (int(n),))

    @classmethod
    def box(cls, lo, hi, n) -> "Grid":
        lo2 = _as_tuple(lo, 2, "lo")
        hi2 = _as_tuple(hi, 2, "hi")
        n2 = tuple(int(v) for v in (n if not np.isscalar(n) else (n, n)))
        return cls(2, lo2, tuple(h - l for l, h in zip(lo2, hi2)), n2)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extent, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    def axis(self, k: int) -> np.ndarray:
        """Cell-center coordinates along axis k."""
        h = self.spacing[k]
        return self.origin[k] + h * (np.arange(self.cells[k]) + 0.5)

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays of full shape (indexing='ij')."""
        if self.dim == 1:
            return (self.axis(0),)
        return tuple(np.meshgrid(self.axis(0), self.axis(1), indexing="ij"))

    def boundary_layer_mask(self, layers: int = 2) -> np.ndarray:
        """Boolean mask selecting the `layers` outermost cells on every side."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = slice(0, layers)
            mask[tuple(sl)] = True
            sl[ax] = slice(-layers, None)
            mask[tuple(sl)] = True
        return mask


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out


def _check_shape(grid: Grid, arr: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.shape != grid.shape:
        raise GridMismatchError(f"{what} has shape {a.shape}, grid expects {grid.shape}")
    return a


@dataclass(frozen=True)
class DensityField:
    """Cell-averaged nonnegative density with (optionally normalized) unit mass.

    Values are stored read-only; all operations return new fields.  Entries may
    dip to -1e-13 (round-off from conservative updates) but no further.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _check_shape(self.grid, self.values, "values")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        if vals.min(initial=0.0) < -NONNEG_ATOL:
            raise ValueError(f"density has negative entries below -{NONNEG_ATOL:g}")
        object.__setattr__(self, "values", _freeze(vals))

    @classmethod
    def from_values(cls, grid: Grid, values, normalize: bool = True) -> "DensityField":
        vals = _check_shape(grid, np.asarray(values, dtype=float), "values")
        if normalize:
            m = vals.sum() * grid.cell_volume
            if m <= 0:
                raise ValueError("cannot normalize a field with nonpositive mass")
            vals = vals / m
        return cls(grid, vals)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def normalized(self) -> "DensityField":
        return DensityField.from_values(self.grid, self.values, normalize=True)

    def support_mask(self, floor_rel: float = 1e-12) -> np.ndarray:
        """Cells carrying non-negligible mass: v >= floor_rel * max(v)."""
        return self.values >= floor_rel * self.values.max()

    def check_margin(self, layers: int = 2, limit: float = MARGIN_DENSITY) -> bool:
        """True iff the density is below `limit` in the outermost `layers` cells."""
        mask = self.grid.boundary_layer_mask(layers)
        return bool(self.values[mask].max(initial=0.0) < limit)


@dataclass(frozen=True)
class VectorFieldSample:
    """Vector field sampled at cell centers; one array per component."""

    grid: Grid
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise GridMismatchError(
                f"expected {self.grid.dim} components, got {len(self.components)}"
            )
        comps = []
        for k, c in enumerate(self.components):
            a = _check_shape(self.grid, c, f"component {k}")
            if not np.all(np.isfinite(a)):
                raise ValueError("vector field entries must be finite")
            comps.append(_freeze(a))
        object.__setattr__(self, "components", tuple(comps))

    @classmethod
    def zero(cls, grid: Grid) -> "VectorFieldSample":
        return cls(grid, tuple(np.zeros(grid.shape) for _ in range(grid.dim)))

    def dot(self, other: "VectorFieldSample") -> np.ndarray:
        if other.grid != self.grid:
            raise GridMismatchError("vector fields live on different grids")
        out = self.components[0] * other.components[0]
        for a, b in zip(self.components[1:], other.components[1:]):
            out = out + a * b
        return out

    def scaled(self, factor) -> "VectorFieldSample":
        f = np.asarray(factor, dtype=float)
        return VectorFieldSample(self.grid, tuple(f * c for c in self.components))

    def plus(self, other: "VectorFieldSample", alpha: float = 1.0) -> "VectorFieldSample":
        if other.grid != self.grid:
            raise GridMismatchError("vector fields live on different grids")
        return VectorFieldSample(
            self.grid,
            tuple(a + alpha * b for a, b in zip(self.components, other.components)),
        )

    def sup_norm(self) -> float:
        return max(float(np.abs(c).max()) for c in self.components)


def integrate(field: DensityField, integrand) -> float:
    """nu(f): midpoint quadrature of `integrand` against the density measure."""
    f = _check_shape(field.grid, integrand, "integrand")
    return float((f * field.values).sum() * field.grid.cell_volume)


def lebesgue_integrate(grid: Grid, integrand) -> float:
    """Plain midpoint quadrature of a cell-wise array over the box."""
    f = _check_shape(grid, integrand, "integrand")
    return float(f.sum() * grid.cell_volume)


def weighted_inner(
    field: DensityField,
    weight,
    a: VectorFieldSample,
    b: VectorFieldSample,
) -> float:
    """Weighted inner product <a, b> with pointwise weight against the density.

    Computes sum weight * (a . b) * v * cellvol.  The weight must be strictly
    positive so the form stays an inner product.
    """
    w = _check_shape(field.grid, weight, "weight")
    if a.grid != field.grid or b.grid != field.grid:
        raise GridMismatchError("fields live on different grids")
    if w.min() <= 0.0:
        raise ValueError("weight must be strictly positive everywhere")
    return float((w * a.dot(b) * field.values).sum() * field.grid.cell_volume)


def gradient_of(scalar, grid: Grid) -> VectorFieldSample:
    """Second-order central differences, one-sided at the boundary cells."""
    f = _check_shape(grid, scalar, "scalar")
    if not np.all(np.isfinite(f)):
        raise ValueError("scalar array must be finite")
    h = grid.spacing
    if grid.dim == 1:
        g = np.gradient(f, h[0], edge_order=2) if grid.cells[0] >= 3 else np.gradient(f, h[0])
        return VectorFieldSample(grid, (g,))
    gs = []
    for ax in range(2):
        order = 2 if grid.cells[ax] >= 3 else 1
        gs.append(np.gradient(f, h[ax], axis=ax, edge_order=order))
    return VectorFieldSample(grid, tuple(gs))


def divergence_of(field: VectorFieldSample) -> np.ndarray:
    """Discrete divergence, symmetric to gradient_of."""
    grid = field.grid
    h = grid.spacing
    out = np.zeros(grid.shape)
    for ax in range(grid.dim):
        order = 2 if grid.cells[ax] >= 3 else 1
        out += np.gradient(field.components[ax], h[ax], axis=ax, edge_order=order)
    return out
