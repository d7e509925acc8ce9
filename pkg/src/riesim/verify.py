"""Independent oracles for the full-density engine.

None of these reuse the propagation kernel: OU moments are closed form,
histograms come from plain pathwise simulation, and the deterministic
reference integrates the zero-noise vector field directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .density import DensityGrid, GridGeometry, MomentSummary
from .errors import GeometryError
from .models import TransferModel


@dataclass(frozen=True)
class OuAnalyticParams:
    x0: tuple = (1.0, 0.8)
    sigma: tuple = (0.4, 0.6)

    def __post_init__(self):
        if any(not s > 0 for s in self.sigma):
            raise ValueError("OU sigma must be positive componentwise")


def ou_analytic_moments(p: OuAnalyticParams, t: float) -> MomentSummary:
    """Exact mean ``x0 e^-t`` and covariance ``(1 - e^-2t)/2 diag(sigma^2)``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    x0 = np.asarray(p.x0, dtype=float)
    s = np.asarray(p.sigma, dtype=float)
    mean = x0 * np.exp(-t)
    cov = np.diag(0.5 * (1.0 - np.exp(-2.0 * t)) * s * s)
    return MomentSummary(mean=mean, covariance=cov)


@dataclass
class PathwiseHistogram:
    geometry: GridGeometry
    counts: np.ndarray
    n_paths: int
    n_outside: int

    def masses(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else np.zeros_like(self.counts, dtype=float)


def pathwise_histogram(model: TransferModel, init_sampler: Callable, n_iterations: int,
                       n_paths: int, geometry: GridGeometry, rng: np.random.Generator,
                       chunk: int = 250_000) -> PathwiseHistogram:
    """Histogram of final states of ``n_paths`` independent realizations.

    ``init_sampler(n, rng)`` returns ``(n, R)`` initial states.  Every path
    gets fresh i.i.d. parameter draws in every iteration.  Paths that leave
    to infinity or end outside the window are counted in ``n_outside``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    counts = np.zeros(int(np.prod(geometry.shape)), dtype=np.int64)
    outside = 0
    for start in range(0, n_paths, chunk):
        n = min(chunk, n_paths - start)
        x = np.asarray(init_sampler(n, rng), dtype=float).reshape(n, model.R)
        with np.errstate(over="ignore", invalid="ignore"):
            for it in range(n_iterations):
                c = model.param_densities.sample(n, rng)
                t = it * model.dt if model.dt is not None else float(it)
                x = model.transfer(x, c, t)
        idx = geometry.cell_index(np.where(np.isfinite(x), x, np.inf))
        outside += int(np.count_nonzero(idx < 0))
        counts += np.bincount(idx[idx >= 0], minlength=counts.size)
    return PathwiseHistogram(geometry, counts.reshape(geometry.shape), n_paths, outside)


def overlap_coefficient(grid: DensityGrid, hist: PathwiseHistogram) -> float:
    """``sum(min(p, q))`` over normalized cell masses; 1 means identical."""
    if grid.geometry != hist.geometry:
        raise GeometryError("overlap_coefficient needs identical geometries")
    p = grid.cell_masses()
    p = p / p.sum()
    return float(np.minimum(p, hist.masses()).sum())


def euler_path(field: Callable, x0, t_end: float, dt: float):
    n = int(round(t_end / dt))
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((n + 1, x.size))
    out[0] = x
    for k in range(n):
        x = x + dt * field(x, k * dt)
        out[k + 1] = x
    return np.arange(n + 1) * dt, out


def rk4_path(field: Callable, x0, t_end: float, dt: float):
    n = int(round(t_end / dt))
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((n + 1, x.size))
    out[0] = x
    for k in range(n):
        t = k * dt
        k1 = field(x, t)
        k2 = field(x + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = field(x + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = field(x + dt * k3, t + dt)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = x
    return np.arange(n + 1) * dt, out


@dataclass
class ReferencePaths:
    euler_t: np.ndarray
    euler_x: np.ndarray
    rk4_t: np.ndarray
    rk4_x: np.ndarray

    def max_deviation(self) -> float:
        """Largest componentwise |Euler - RK4| over the Euler time stamps."""
        stride = (len(self.rk4_t) - 1) // (len(self.euler_t) - 1)
        ref = self.rk4_x[::stride][:len(self.euler_x)]
        return float(np.max(np.abs(self.euler_x - ref)))


def deterministic_reference(model: TransferModel, x0, t_end: float,
                            dt_euler: float | None = None, refine: int = 10) -> ReferencePaths:
    """Euler path at ``dt_euler`` and classic RK4 at ``dt_euler / refine``.

    Uses the model's zero-noise vector field; ``dt_euler`` defaults to the
    model's own step.
    """
    dt = model.dt if dt_euler is None else dt_euler
    if dt is None:
        raise ValueError(f"model {model.name!r} has no time step")
    field = lambda x, t: model.vector_field(x, t)  # noqa: E731
    et, ex = euler_path(field, x0, t_end, dt)
    rt, rx = rk4_path(field, x0, t_end, dt / refine)
    return ReferencePaths(et, ex, rt, rx)
