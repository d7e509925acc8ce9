"""Full-density propagation.

One step estimates the next posterior on the grid by Monte-Carlo
integration of the likelihood integral::

    pi_next(x) ~ 1/P * sum_p prod_r N(x_r - T_r(s1_p, s2_p); 0, sigma_B_r^2)

with ``s1_p`` drawn from the current posterior and ``s2_p`` from the
parameter densities.  Each sample contributes a separable Gaussian splat,
truncated at ``KERNEL_CUTOFF`` standard deviations per component.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .density import DensityGrid, GridGeometry, MomentSummary, l1_distance, moments, normalize
from .errors import RieError, VanishingPosteriorError
from .models import TransferModel
from .sampling import (
    DEFAULT_MAX_FACTOR,
    ParamBatchSource,
    RngStream,
    SampleBatch,
    accept_reject,
    partition,
)

log = logging.getLogger(__name__)

KERNEL_CUTOFF = 6.0
# max entries of one (samples x splat cells) block
_BLOCK_ENTRIES = 1 << 22

PARAM_STREAM = 1
STATE_STREAM = 2


@dataclass(frozen=True)
class ZeroNoiseSpec:
    sigma_B: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in np.atleast_1d(self.sigma_B))
        if not s or any(not v > 0 for v in s):
            raise ValueError(f"sigma_B entries must be > 0, got {s}")
        object.__setattr__(self, "sigma_B", s)

    @classmethod
    def of(cls, value, R: int) -> "ZeroNoiseSpec":
        if isinstance(value, ZeroNoiseSpec):
            value = value.sigma_B
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(tuple(np.broadcast_to(v, (R,))))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.sigma_B)


def gaussian_kernel_value(x, t, sigma_B) -> float:
    """Product over components of the N(0, sigma_B_r^2) pdf at ``x - t``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = ZeroNoiseSpec.of(sigma_B, x.shape[-1]).array
    z = (x - t) / s
    return np.prod(np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * s), axis=-1)


def _axis_weights(coord, lo, h, n, sigma):
    """Candidate cell indices and kernel weights along one axis.

    Returns ``(idx, w)`` of shape ``(P, m)``; entries outside the window or
    beyond the cutoff carry weight 0 and index 0.
    """
    reach = KERNEL_CUTOFF * sigma / h
    m = int(math.floor(2.0 * reach)) + 1
    u = (coord - lo) / h - 0.5  # cell i has its center at u == i
    start = np.ceil(u - reach).astype(np.int64)
    idx = start[:, None] + np.arange(m)[None, :]
    d = (idx - u[:, None]) * (h / sigma)
    w = np.exp(-0.5 * d * d) / (math.sqrt(2.0 * math.pi) * sigma)
    bad = (idx < 0) | (idx >= n) | (np.abs(d) > KERNEL_CUTOFF)
    w[bad] = 0.0
    idx[bad] = 0
    return idx, w


def accumulate(geometry: GridGeometry, targets, sigma_B, weights=None) -> np.ndarray:
    """Unnormalized sum of truncated Gaussian splats centered at ``targets``.

    ``weights`` defaults to ``1/P`` per target, which makes the result the
    plain Monte-Carlo estimate.  The result is linear in ``weights``.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, geometry.R)
    P = len(targets)
    sig = ZeroNoiseSpec.of(sigma_B, geometry.R).array
    if weights is None:
        weights = np.full(P, 1.0 / max(P, 1))
    weights = np.asarray(weights, dtype=float)
    h = geometry.cell_size
    n_total = int(np.prod(geometry.shape))
    acc = np.zeros(n_total)

    finite = np.all(np.isfinite(targets), axis=1)
    # drop targets whose splat cannot touch the window
    lo = np.array(geometry.lo) - KERNEL_CUTOFF * sig
    hi = np.array(geometry.hi) + KERNEL_CUTOFF * sig
    near = finite & np.all((targets >= lo) & (targets <= hi), axis=1) & (weights != 0)
    targets, weights = targets[near], weights[near]
    if not len(targets):
        return acc.reshape(geometry.shape)

    width = int(np.prod([math.floor(2 * KERNEL_CUTOFF * sig[r] / h[r]) + 1
                         for r in range(geometry.R)]))
    block = max(1, _BLOCK_ENTRIES // width)
    for s in range(0, len(targets), block):
        tb = targets[s:s + block]
        flat, w = None, None
        for r in range(geometry.R):
            idx_r, w_r = _axis_weights(tb[:, r], geometry.lo[r], h[r], geometry.n_cells[r], sig[r])
            if flat is None:
                flat, w = idx_r, w_r
            else:
                flat = (flat[:, :, None] * geometry.n_cells[r] + idx_r[:, None, :]).reshape(len(tb), -1)
                w = (w[:, :, None] * w_r[:, None, :]).reshape(len(tb), -1)
        w = w * weights[s:s + block, None]
        acc += np.bincount(flat.ravel(), weights=w.ravel(), minlength=n_total)
    return acc.reshape(geometry.shape)


def _far_fraction(geometry: GridGeometry, targets, sigma_B) -> float:
    sig = ZeroNoiseSpec.of(sigma_B, geometry.R).array
    lo = np.array(geometry.lo) - KERNEL_CUTOFF * sig
    hi = np.array(geometry.hi) + KERNEL_CUTOFF * sig
    t = np.asarray(targets, dtype=float).reshape(-1, geometry.R)
    far = ~np.all((t >= lo) & (t <= hi), axis=1) | ~np.all(np.isfinite(t), axis=1)
    return float(far.mean()) if len(t) else 1.0


def _finish(geometry, acc, targets, sigma_B) -> DensityGrid:
    if not acc.sum() > 0:
        frac = _far_fraction(geometry, targets, sigma_B)
        raise VanishingPosteriorError(
            f"vanishing posterior: accumulated likelihood is zero; {frac:.1%} of transfer "
            f"outputs lie farther than {KERNEL_CUTOFF:g} sigma_B from the window")
    return normalize(DensityGrid(geometry, acc))


def step(prior: DensityGrid, model: TransferModel, batch: SampleBatch, sigma_B,
         t: float = 0.0, workers: int = 1) -> DensityGrid:
    """Next posterior on ``prior``'s grid from one sample batch.

    ``batch.state_samples`` must already be draws from ``prior``; the prior
    grid itself only supplies the geometry.
    """
    g = prior.geometry
    if batch.state_samples.shape[1] != model.R or batch.param_samples.shape[1] != model.K:
        raise ValueError(
            f"batch shape (R={batch.state_samples.shape[1]}, K={batch.param_samples.shape[1]}) "
            f"does not match model {model.name!r} (R={model.R}, K={model.K})")
    sigma_B = ZeroNoiseSpec.of(sigma_B, g.R)
    targets = model.transfer(batch.state_samples, batch.param_samples, t)
    P = batch.P
    parts = partition(P, workers)
    bounds = np.cumsum([0] + parts)

    def work(w):
        a, b = bounds[w], bounds[w + 1]
        return accumulate(g, targets[a:b], sigma_B, np.full(b - a, 1.0 / P))

    acc = _reduce(_map(work, len(parts), workers))
    return _finish(g, acc, targets, sigma_B)


def _map(fn, n, workers):
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def _reduce(parts):
    acc = parts[0].copy()
    for p in parts[1:]:
        acc += p
    return acc


@dataclass
class PropagationConfig:
    P: int
    n_iterations: int
    sigma_B: ZeroNoiseSpec
    geometry: GridGeometry
    snapshot_iterations: tuple = ()
    seed: int = 0
    stop_tolerance: Optional[float] = None
    reuse_param_batch: bool = False
    workers: int = 1
    max_factor: int = DEFAULT_MAX_FACTOR

    def __post_init__(self):
        if self.P < 1:
            raise ValueError("P must be >= 1")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        self.sigma_B = ZeroNoiseSpec.of(self.sigma_B, self.geometry.R)
        snaps = tuple(sorted(set(int(s) for s in self.snapshot_iterations)))
        bad = [s for s in snaps if not 1 <= s <= self.n_iterations]
        if bad:
            raise ValueError(f"snapshot iterations {bad} outside [1, {self.n_iterations}]")
        self.snapshot_iterations = snaps
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class Snapshot:
    iteration: int
    time: float
    grid: DensityGrid
    moments: MomentSummary


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    moment_trace: list = field(default_factory=list)  # (iteration, time, MomentSummary)
    l1_trace: list = field(default_factory=list)  # (iteration, l1 to previous posterior)
    stop_reason: str = "iteration budget"
    final: Optional[DensityGrid] = None
    final_iteration: int = 0
    metadata: dict = field(default_factory=dict)

    def snapshot(self, iteration: int) -> Snapshot:
        for s in self.snapshots:
            if s.iteration == iteration:
                return s
        raise KeyError(f"no snapshot at iteration {iteration}")


def iteration_time(model: TransferModel, iteration: int) -> float:
    return iteration * model.dt if model.dt is not None else float(iteration)


def draw_state_samples(grid: DensityGrid, P: int, rng: RngStream, iteration: int,
                       workers: int = 1, max_factor: int = DEFAULT_MAX_FACTOR) -> list:
    """Acceptance-rejection draws split into per-worker blocks (worker order)."""
    parts = partition(P, workers)
    return _map(lambda w: accept_reject(grid, parts[w], rng.generator(iteration, w), max_factor),
                len(parts), workers)


def run(initial: DensityGrid, model: TransferModel, cfg: PropagationConfig,
        callback: Optional[Callable] = None) -> Trajectory:
    """Iterate :func:`step` from ``initial``.

    Iteration ``n`` denotes the posterior after ``n`` steps (time ``n * dt``);
    ``initial`` is iteration 0.  Moments are recorded for every iteration;
    full grids only at ``cfg.snapshot_iterations`` and for the final state.
    ``callback(iteration, grid)`` is called after each step.
    """
    g = cfg.geometry
    if initial.geometry != g:
        raise ValueError("initial density geometry differs from the configured grid")
    if not initial.is_normalized():
        initial = normalize(initial)
    geo_errors = model.check_geometry(g)
    if geo_errors:
        raise ValueError("; ".join(geo_errors))

    root = RngStream(cfg.seed)
    params = ParamBatchSource(model.param_densities, cfg.P, root.child(PARAM_STREAM),
                              reuse=cfg.reuse_param_batch)
    state_rng = root.child(STATE_STREAM)
    workers = min(cfg.workers, cfg.P)
    traj = Trajectory(metadata=dict(model=model.name, seed=cfg.seed, workers=workers, P=cfg.P,
                                    sigma_B=cfg.sigma_B.sigma_B))
    traj.moment_trace.append((0, iteration_time(model, 0), moments(initial)))
    snaps = set(cfg.snapshot_iterations)

    current = initial
    for n in range(cfg.n_iterations):
        it = n + 1
        try:
            c = params.draw(n)
            blocks = draw_state_samples(current, cfg.P, state_rng, n, workers, cfg.max_factor)
            batch = SampleBatch(np.concatenate(blocks), c)
            nxt = step(current, model, batch, cfg.sigma_B, iteration_time(model, n), workers)
        except RieError as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        m = moments(nxt)
        t = iteration_time(model, it)
        traj.moment_trace.append((it, t, m))
        d = l1_distance(current, nxt)
        traj.l1_trace.append((it, d))
        if it in snaps:
            traj.snapshots.append(Snapshot(it, t, nxt, m))
        if callback is not None:
            callback(it, nxt)
        current = nxt
        if cfg.stop_tolerance is not None and d < cfg.stop_tolerance:
            traj.stop_reason = "tolerance reached"
            break
    traj.final = current
    traj.final_iteration = it
    log.debug("run %s finished at iteration %d (%s)", model.name, it, traj.stop_reason)
    return traj
