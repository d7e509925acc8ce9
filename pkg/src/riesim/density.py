"""Gridded probability densities over a fixed rectangular state window.

Values live at cell centers and every integral is a midpoint sum, so the
integral of a grid is ``values.sum() * cell_volume``.  Arrays are indexed
``values[i0, i1]`` with ``i0`` running along the first state component.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateDensityError,
    GeometryError,
    NotNormalizedError,
    VanishingPosteriorError,
)

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class GridGeometry:
    lo: tuple
    hi: tuple
    n_cells: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n_cells))
        if not (len(lo) == len(hi) == len(n)):
            raise GeometryError("lo, hi and n_cells must have the same length")
        if len(lo) not in (1, 2):
            raise GeometryError(f"state dimension must be 1 or 2, got {len(lo)}")
        for r in range(len(lo)):
            if not lo[r] < hi[r]:
                raise GeometryError(f"lo[{r}]={lo[r]} must be < hi[{r}]={hi[r]}")
            if n[r] < 2:
                raise GeometryError(f"n_cells[{r}]={n[r]} must be >= 2")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n_cells", n)

    @property
    def R(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return self.n_cells

    @property
    def cell_size(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / np.array(self.n_cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_size))

    @property
    def window_volume(self) -> float:
        return float(np.prod(np.array(self.hi) - np.array(self.lo)))

    def axis_centers(self, r: int) -> np.ndarray:
        h = self.cell_size[r]
        return self.lo[r] + h * (np.arange(self.n_cells[r]) + 0.5)

    def centers(self) -> np.ndarray:
        """All cell centers as an ``(n_total, R)`` array in flat (C) order."""
        axes = [self.axis_centers(r) for r in range(self.R)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def center_of(self, flat_index: int) -> np.ndarray:
        idx = np.unravel_index(int(flat_index), self.shape)
        return np.array([self.axis_centers(r)[idx[r]] for r in range(self.R)])

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """Flat index of the cell containing each point, -1 outside the window."""
        points = np.asarray(points, dtype=float).reshape(-1, self.R)
        h = self.cell_size
        flat = np.zeros(len(points), dtype=np.int64)
        inside = np.ones(len(points), dtype=bool)
        for r in range(self.R):
            i = np.floor((points[:, r] - self.lo[r]) / h[r]).astype(np.int64)
            inside &= (points[:, r] >= self.lo[r]) & (points[:, r] < self.hi[r])
            i = np.clip(i, 0, self.n_cells[r] - 1)
            flat = flat * self.n_cells[r] + i
        flat[~inside] = -1
        return flat

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.cell_index(points) >= 0


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


class DensityGrid:
    """Nonnegative cell values on a :class:`GridGeometry`.

    The value array is copied and frozen on construction, so grids can be
    shared between threads without copying.
    """

    __slots__ = ("geometry", "values")

    def __init__(self, geometry: GridGeometry, values):
        values = np.array(values, dtype=float, copy=True)
        if values.shape != geometry.shape:
            raise GeometryError(f"values shape {values.shape} != grid shape {geometry.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("density values must be finite and nonnegative")
        values.setflags(write=False)
        self.geometry = geometry
        self.values = values

    def __repr__(self):
        return f"DensityGrid(n_cells={self.geometry.n_cells}, mass={self.mass():.6g})"

    def mass(self) -> float:
        return float(self.values.sum() * self.geometry.cell_volume)

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(self.mass() - 1.0) <= tol

    def cell_masses(self) -> np.ndarray:
        return self.values * self.geometry.cell_volume

    def evaluate(self, points) -> np.ndarray:
        """Piecewise-constant lookup; zero outside the window."""
        idx = self.geometry.cell_index(points)
        flat = self.values.ravel()
        out = np.zeros(len(idx))
        ok = idx >= 0
        out[ok] = flat[idx[ok]]
        return out


def _box_mask(geometry: GridGeometry, lo, hi) -> np.ndarray:
    mask = np.ones(geometry.shape, dtype=bool)
    for r in range(geometry.R):
        c = geometry.axis_centers(r)
        inside = (c >= lo[r]) & (c <= hi[r])
        shape = [1] * geometry.R
        shape[r] = -1
        mask = mask & inside.reshape(shape)
    return mask


def new_uniform(geometry: GridGeometry, support_lo, support_hi) -> DensityGrid:
    """Uniform density on the cells whose centers fall inside a box.

    A box narrower than one cell still selects the cell containing it, so a
    single-cell support gives a delta-like grid.
    """
    lo = np.atleast_1d(np.asarray(support_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(support_hi, dtype=float))
    if lo.shape != (geometry.R,) or hi.shape != (geometry.R,):
        raise GeometryError("support box dimension does not match the grid")
    if np.any(lo > hi):
        raise DegenerateDensityError("degenerate initial density: support lo > hi")
    mask = _box_mask(geometry, lo, hi)
    if not mask.any():
        # box strictly between centers: fall back to the containing cells
        mid = geometry.cell_index(((lo + hi) / 2)[None, :])[0]
        if mid < 0:
            raise DegenerateDensityError(
                "degenerate initial density: support box does not intersect the grid window")
        mask = np.zeros(geometry.shape, dtype=bool)
        mask.ravel()[mid] = True
    return normalize(DensityGrid(geometry, mask.astype(float)))


def new_gaussian(geometry: GridGeometry, mean, std) -> DensityGrid:
    """Axis-aligned Gaussian sampled at cell centers, then normalized."""
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (geometry.R,))
    std = np.broadcast_to(np.asarray(std, dtype=float), (geometry.R,))
    if np.any(std <= 0):
        raise ValueError("std must be positive")
    z = (geometry.centers() - mean) / std
    values = np.exp(-0.5 * np.sum(z * z, axis=1)).reshape(geometry.shape)
    try:
        return normalize(DensityGrid(geometry, values))
    except VanishingPosteriorError:
        raise DegenerateDensityError(
            "degenerate initial density: gaussian has no mass inside the window") from None


def from_function(geometry: GridGeometry, fn) -> DensityGrid:
    """Sample ``fn`` (vectorized over an ``(n, R)`` array) at cell centers and normalize."""
    values = np.asarray(fn(geometry.centers()), dtype=float).reshape(geometry.shape)
    return normalize(DensityGrid(geometry, values))


def normalize(grid: DensityGrid) -> DensityGrid:
    total = grid.values.sum(dtype=np.float64)
    if not total > 0:
        raise VanishingPosteriorError(
            "vanishing posterior: all cell values are zero (sigma_B or P too small?)")
    values = grid.values / (total * grid.geometry.cell_volume)
    out = DensityGrid(grid.geometry, values)
    # one correction pass absorbs the rounding of the division
    err = out.mass() - 1.0
    if abs(err) > NORMALIZATION_TOL:
        out = DensityGrid(grid.geometry, values / (1.0 + err))
    return out


def _require_normalized(grid: DensityGrid, tol: float = 1e-9):
    if not grid.is_normalized(tol):
        raise NotNormalizedError(f"grid is not normalized (mass={grid.mass():.12g})")


def moments(grid: DensityGrid) -> MomentSummary:
    _require_normalized(grid)
    g = grid.geometry
    w = grid.cell_masses().ravel()
    x = g.centers()
    mean = w @ x
    d = x - mean
    cov = (d * w[:, None]).T @ d
    cov = 0.5 * (cov + cov.T)
    return MomentSummary(mean=mean, covariance=cov)


def mode(grid: DensityGrid) -> np.ndarray:
    """Center of the largest cell; ties go to the lowest flat index."""
    _require_normalized(grid)
    # np.argmax returns the first occurrence
    return grid.geometry.center_of(int(np.argmax(grid.values.ravel())))


def l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    if a.geometry != b.geometry:
        raise GeometryError("l1_distance needs identical grid geometries")
    return float(np.abs(a.values - b.values).sum() * a.geometry.cell_volume)


def local_maxima(grid: DensityGrid, min_distance: float, n: int | None = None) -> list:
    """Peaks of the grid, strongest first.

    A cell counts as a peak when it is the maximum of the box of half-width
    ``min_distance`` (state units) around it; a greedy suppression pass then
    drops any peak within ``min_distance`` of a stronger one so that plateaus
    and noise shoulders yield a single location.
    """
    g = grid.geometry
    half = np.maximum(1, np.ceil(min_distance / g.cell_size).astype(int))
    size = tuple(2 * half + 1)
    vals = grid.values
    filt = ndimage.maximum_filter(vals, size=size, mode="constant", cval=0.0)
    cand = np.flatnonzero((vals == filt).ravel() & (vals.ravel() > 0))
    cand = cand[np.argsort(-vals.ravel()[cand], kind="stable")]
    peaks = []
    for idx in cand:
        c = g.center_of(idx)
        if all(np.linalg.norm(c - p) >= min_distance for p, _ in peaks):
            peaks.append((c, float(vals.ravel()[idx])))
            if n is not None and len(peaks) == n:
                break
    return peaks


def mass_within(grid: DensityGrid, centers: Sequence, radius: float) -> float:
    """Probability mass of the cells whose centers lie within ``radius`` of any point."""
    x = grid.geometry.centers()
    near = np.zeros(len(x), dtype=bool)
    for c in centers:
        near |= np.linalg.norm(x - np.asarray(c, dtype=float), axis=1) <= radius
    return float(grid.cell_masses().ravel()[near].sum())
