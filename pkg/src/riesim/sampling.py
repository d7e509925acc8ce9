"""Per-iteration sample batches.

Parameter draws come from latin hypercube sampling of independent
marginals; state draws come from acceptance-rejection against the current
gridded posterior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import stats

from .density import DensityGrid
from .errors import AcceptanceRateError, NotNormalizedError

DEFAULT_MAX_FACTOR = 1000


@dataclass(frozen=True)
class GaussianSpec:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"GaussianSpec std must be > 0, got {self.std}")

    def ppf(self, u):
        return stats.norm.ppf(u, loc=self.mean, scale=self.std)

    def sample(self, n, rng):
        return rng.normal(self.mean, self.std, n)

    @property
    def center(self) -> float:
        return float(self.mean)


@dataclass(frozen=True)
class UniformSpec:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"UniformSpec needs lo < hi, got [{self.lo}, {self.hi}]")

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u)

    def sample(self, n, rng):
        return rng.uniform(self.lo, self.hi, n)

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


ComponentDensity = Union[GaussianSpec, UniformSpec]


@dataclass(frozen=True)
class ParamDensitySet:
    components: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def K(self) -> int:
        return len(self.components)

    def __len__(self):
        return self.K

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, k):
        return self.components[k]

    def centers(self) -> np.ndarray:
        """Mean (Gaussian) or midpoint (uniform) of every component."""
        return np.array([c.center for c in self.components], dtype=float)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Plain i.i.d. Monte-Carlo draws, shape ``(n, K)``."""
        cols = [c.sample(n, rng) for c in self.components]
        return np.stack(cols, axis=1) if cols else np.empty((n, 0))


@dataclass(frozen=True)
class RngStream:
    """Deterministic source of independent generators.

    ``generator(*key)`` hashes ``(seed, stream, *key)`` through
    ``SeedSequence``; the same key always yields the same draws.
    """

    seed: int
    stream: int = 0

    def generator(self, *key: int) -> np.random.Generator:
        entropy = [int(self.seed) & 0xFFFFFFFFFFFFFFFF, int(self.stream), *map(int, key)]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)


@dataclass
class SampleBatch:
    state_samples: np.ndarray
    param_samples: np.ndarray

    def __post_init__(self):
        self.state_samples = np.asarray(self.state_samples, dtype=float)
        self.param_samples = np.asarray(self.param_samples, dtype=float)
        if self.state_samples.ndim != 2 or self.param_samples.ndim != 2:
            raise ValueError("sample matrices must be 2-D (P x R and P x K)")
        if len(self.state_samples) != len(self.param_samples):
            raise ValueError(
                f"state ({len(self.state_samples)}) and parameter ({len(self.param_samples)}) "
                "sample counts differ")

    @property
    def P(self) -> int:
        return len(self.state_samples)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def latin_hypercube(dists: ParamDensitySet, P: int, rng) -> np.ndarray:
    """One draw per probability stratum ``[i/P, (i+1)/P)`` for every component."""
    if P < 1:
        raise ValueError("P must be >= 1")
    rng = _as_rng(rng)
    out = np.empty((P, dists.K))
    for k, comp in enumerate(dists):
        u = (rng.permutation(P) + rng.random(P)) / P
        out[:, k] = comp.ppf(u)
    return out


class ParamBatchSource:
    """Parameter batches for successive iterations.

    With ``reuse=True`` the batch drawn before the first iteration is
    returned for every iteration.
    """

    def __init__(self, dists: ParamDensitySet, P: int, rng: RngStream, reuse: bool = False):
        self.dists = dists
        self.P = P
        self.rng = rng
        self.reuse = reuse
        self._cached = None
        self._calls = 0

    def draw(self, iteration: int | None = None) -> np.ndarray:
        if iteration is None:
            iteration = self._calls
        self._calls += 1
        if self.reuse:
            if self._cached is None:
                self._cached = latin_hypercube(self.dists, self.P, self.rng.generator(0))
            return self._cached
        return latin_hypercube(self.dists, self.P, self.rng.generator(int(iteration)))


def draw_param_iteration(dists: ParamDensitySet, P: int, rng: RngStream,
                         reuse: bool, iteration: int = 0) -> np.ndarray:
    """Stateless form of :class:`ParamBatchSource`.

    ``reuse`` ignores ``iteration`` and always returns the pre-iteration batch.
    """
    key = 0 if reuse else int(iteration)
    return latin_hypercube(dists, P, rng.generator(key))


def support_box(grid: DensityGrid):
    """Smallest box of whole cells holding every positive cell."""
    g = grid.geometry
    pos = grid.values > 0
    lo, hi = [], []
    for r in range(g.R):
        other = tuple(a for a in range(g.R) if a != r)
        hit = np.flatnonzero(pos.any(axis=other) if other else pos)
        h = g.cell_size[r]
        lo.append(g.lo[r] + h * hit[0])
        hi.append(g.lo[r] + h * (hit[-1] + 1))
    return np.array(lo), np.array(hi)


def accept_reject(grid: DensityGrid, P: int, rng, max_factor: int = DEFAULT_MAX_FACTOR,
                  batch: int = 65536) -> np.ndarray:
    """Draw exactly ``P`` points from the piecewise-constant density ``grid``.

    Proposals are uniform in the box spanned by the positive cells, and a
    proposal is kept when a uniform height in ``[0, max(grid)]`` does not
    exceed the value of its cell.
    """
    if not grid.is_normalized(1e-9):
        raise NotNormalizedError("accept_reject needs a normalized grid")
    rng = _as_rng(rng)
    g = grid.geometry
    vmax = float(grid.values.max())
    if not vmax > 0:
        raise AcceptanceRateError("acceptance rate too low: grid maximum is zero")
    lo, hi = support_box(grid)
    # proposals never land in a zero cell outside the box, so the accepted
    # law equals proposing over the whole window
    upper = np.nextafter(hi, lo)
    flat = grid.values.ravel()
    out = np.empty((P, g.R))
    filled = 0
    proposed = 0
    budget = max_factor * P
    while filled < P:
        if proposed >= budget:
            raise AcceptanceRateError(
                f"acceptance rate too low: {filled}/{P} accepted after {proposed} proposals "
                f"(max_factor={max_factor}); posterior too peaked for the window")
        n = int(min(batch, budget - proposed))
        x = rng.uniform(lo, hi, size=(n, g.R))
        x = np.minimum(x, upper)
        y = rng.uniform(0.0, vmax, size=n)
        proposed += n
        keep = x[y <= flat[g.cell_index(x)]]
        take = min(len(keep), P - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def sample_grid_direct(grid: DensityGrid, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact sampler by cell choice then uniform position inside the cell.

    Used as an independent check on :func:`accept_reject` and to seed
    pathwise simulations from a gridded initial density.
    """
    g = grid.geometry
    p = grid.cell_masses().ravel()
    p = p / p.sum()
    idx = rng.choice(p.size, size=n, p=p)
    sub = np.unravel_index(idx, g.shape)
    h = g.cell_size
    u = rng.random((n, g.R))
    return np.stack([g.lo[r] + h[r] * (sub[r] + u[:, r]) for r in range(g.R)], axis=1)


def partition(P: int, workers: int) -> list:
    """Split ``P`` into ``workers`` near-equal contiguous counts."""
    workers = max(1, min(int(workers), P))
    base, extra = divmod(P, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]
