"""Transfer functions and their parameter presets.

Every transfer is vectorized: ``transfer(x, c, t)`` takes ``x`` of shape
``(P, R)`` and ``c`` of shape ``(P, K)`` and returns ``(P, R)``.  ``t`` is
the time (or iteration index for maps) of the current iterate; the shipped
models are autonomous and ignore it.

Wiener increments of the discretized SDEs are parameter components with
standard deviation ``sqrt(dt)``, i.e. variance ``dt``.
"""

from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .density import GridGeometry
from .sampling import GaussianSpec, ParamDensitySet

HOLLING_MIN_X1 = -0.5


@dataclass(frozen=True)
class ObjectiveFunction:
    f: Callable
    grad: Callable
    name: str = ""


@dataclass(frozen=True)
class TransferModel:
    name: str
    R: int
    K: int
    param_densities: ParamDensitySet
    transfer: Callable
    dt: Optional[float] = None
    objective: Optional[ObjectiveFunction] = None
    geometry_check: Optional[Callable] = None
    description: str = ""
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.param_densities.K != self.K:
            raise ValueError(
                f"{self.name}: K={self.K} but {self.param_densities.K} parameter densities given")

    def __call__(self, x, c, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = np.asarray(c, dtype=float)
        single = x.ndim == 1
        x2 = x.reshape(-1, self.R)
        c2 = c.reshape(len(x2), self.K) if self.K else np.empty((len(x2), 0))
        out = self.transfer(x2, c2, t)
        return out[0] if single else out

    def nominal_params(self) -> np.ndarray:
        """Zero-noise parameter vector: the center of every parameter density."""
        return self.param_densities.centers()

    def vector_field(self, x, t: float = 0.0) -> np.ndarray:
        """Drift ``F`` of a discretized system, recovered as ``(T(x, c0) - x) / dt``."""
        if self.dt is None:
            raise ValueError(f"model {self.name!r} is not a discretized ODE/SDE")
        x = np.asarray(x, dtype=float)
        return (self(x, self.nominal_params(), t) - x) / self.dt

    def check_geometry(self, geometry: GridGeometry) -> list:
        errors = []
        if geometry.R != self.R:
            errors.append(f"model {self.name!r} has state dimension {self.R}, grid has {geometry.R}")
        elif self.geometry_check is not None:
            errors.extend(self.geometry_check(geometry))
        return errors


def _gauss(mean, std):
    return GaussianSpec(float(mean), float(std))


def _holling_window_check(geometry: GridGeometry) -> list:
    if geometry.lo[0] <= HOLLING_MIN_X1:
        return [f"grid lo[0]={geometry.lo[0]} violates x1 > {HOLLING_MIN_X1} "
                "(Holling term 1/(1+x1) has a pole at x1=-1)"]
    return []


def identity(R: int = 2) -> TransferModel:
    """``T(x) = x`` without parameters; a test fixture, not in the registry."""
    return TransferModel("identity", R, 0, ParamDensitySet(), lambda x, c, t: x.copy())


def additive_diffusion(c_std: float = 0.1) -> TransferModel:
    if not c_std > 0:
        raise ValueError("c_std must be > 0")

    def transfer(x, c, t):
        return x + c

    return TransferModel("additive_diffusion", 1, 1, ParamDensitySet([_gauss(0.0, c_std)]),
                         transfer, description="x + C, C ~ N(0, c_std^2)",
                         settings={"c_std": c_std})


def rm_drift(x1, x2, k, m, c):
    """Normalized Rosenzweig-McArthur vector field with carrying capacity ``k``."""
    predation = m * x1 * x2 / (1.0 + x1)
    return x1 * (1.0 - x1 / k) - predation, -c * x2 + predation


def rosenzweig_mcarthur_rde(dt: float = 0.2, c1=(1.0, 0.01), c2=(1.0, 0.01),
                            c3=(0.25, 0.01)) -> TransferModel:
    """Euler step of the predator-prey model with random parameters."""

    def transfer(x, c, t):
        f1, f2 = rm_drift(x[:, 0], x[:, 1], c[:, 0], c[:, 1], c[:, 2])
        return np.stack([x[:, 0] + dt * f1, x[:, 1] + dt * f2], axis=1)

    dens = ParamDensitySet([_gauss(*c1), _gauss(*c2), _gauss(*c3)])
    return TransferModel("rosenzweig_mcarthur_rde", 2, 3, dens, transfer, dt=dt,
                         geometry_check=_holling_window_check,
                         description="Rosenzweig-McArthur RDE, Euler step",
                         settings=dict(dt=dt, c1=c1, c2=c2, c3=c3))


def rosenzweig_mcarthur_sde(dt: float = 0.05, k: float = 1.9, m: float = 1.1, c: float = 0.31,
                            sigma1: float = 0.04, sigma2: float = 0.04) -> TransferModel:
    """Euler-Maruyama step with multiplicative noise ``sigma_i * x_i * dW_i``."""

    def transfer(x, w, t):
        f1, f2 = rm_drift(x[:, 0], x[:, 1], k, m, c)
        return np.stack([x[:, 0] + f1 * dt + sigma1 * x[:, 0] * w[:, 0],
                         x[:, 1] + f2 * dt + sigma2 * x[:, 1] * w[:, 1]], axis=1)

    sq = math.sqrt(dt)
    dens = ParamDensitySet([_gauss(0.0, sq), _gauss(0.0, sq)])
    return TransferModel("rosenzweig_mcarthur_sde", 2, 2, dens, transfer, dt=dt,
                         geometry_check=_holling_window_check,
                         description="Rosenzweig-McArthur SDE, Euler-Maruyama step",
                         settings=dict(dt=dt, k=k, m=m, c=c, sigma1=sigma1, sigma2=sigma2))


# -- full-density gradient descent ---------------------------------------------------

def two_minima_objective() -> ObjectiveFunction:
    def f(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] ** 4 - 3 * x[..., 0] ** 2 + x[..., 0] + 5 + 2 * x[..., 1] ** 2

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.stack([4 * x[..., 0] ** 3 - 6 * x[..., 0] + 1, 4 * x[..., 1]], axis=-1)

    return ObjectiveFunction(f, grad, "two_minima")


def himmelblau_objective() -> ObjectiveFunction:
    def f(x):
        x = np.asarray(x, dtype=float)
        a = x[..., 0] ** 2 + x[..., 1] - 11
        b = x[..., 0] + x[..., 1] ** 2 - 7
        return a * a + b * b

    def grad(x):
        x = np.asarray(x, dtype=float)
        a = x[..., 0] ** 2 + x[..., 1] - 11
        b = x[..., 0] + x[..., 1] ** 2 - 7
        return np.stack([4 * x[..., 0] * a + 2 * b, 2 * a + 4 * x[..., 1] * b], axis=-1)

    return ObjectiveFunction(f, grad, "himmelblau")


def fdgd1(objective_grad: Callable, eta: float, params: ParamDensitySet, R: int = 2,
          name: str = "fdgd1") -> TransferModel:
    """Gradient descent on a random objective, ``x - eta * grad(x, c)``.

    ``objective_grad(x, c)`` receives the ``(P, R)`` states and ``(P, K)``
    parameter draws.
    """

    def transfer(x, c, t):
        return x - eta * objective_grad(x, c)

    return TransferModel(name, R, params.K, params, transfer, description="FDGD-I",
                         settings={"eta": eta})


def fdgd2(objective: ObjectiveFunction, eta: float, step_std, name: str = "fdgd2") -> TransferModel:
    """Gradient step plus an additive diffusion ``C ~ N(0, step_std^2)`` per component."""
    step_std = np.atleast_1d(step_std).astype(float)

    def transfer(x, c, t):
        return x - eta * objective.grad(x) + c

    R = len(step_std)
    dens = ParamDensitySet([_gauss(0.0, s) for s in step_std])
    return TransferModel(name, R, R, dens, transfer, objective=objective, description="FDGD-II",
                         settings={"eta": eta, "step_std": tuple(step_std)})


def fdgd3(objective: ObjectiveFunction, rate: tuple, step_std, name: str = "fdgd3") -> TransferModel:
    """FDGD-II with a random learning rate drawn as the last parameter component."""
    step_std = np.atleast_1d(step_std).astype(float)
    R = len(step_std)

    def transfer(x, c, t):
        return x - c[:, R:R + 1] * objective.grad(x) + c[:, :R]

    dens = ParamDensitySet([_gauss(0.0, s) for s in step_std] + [_gauss(*rate)])
    return TransferModel(name, R, R + 1, dens, transfer, objective=objective,
                         description="FDGD-III",
                         settings={"rate": tuple(rate), "step_std": tuple(step_std)})


def fdgd2_two_minima(eta: float = 0.075, step_std: float = 0.04) -> TransferModel:
    return fdgd2(two_minima_objective(), eta, [step_std, step_std], name="fdgd2_two_minima")


def fdgd3_himmelblau(step_std: float = 0.2, rate=(0.01, 0.003)) -> TransferModel:
    return fdgd3(himmelblau_objective(), tuple(rate), [step_std, step_std],
                 name="fdgd3_himmelblau")


# -- chaotic maps --------------------------------------------------------------------

def ikeda_angle(x):
    x = np.asarray(x, dtype=float)
    return 0.4 - 6.0 / (1.0 + x[..., 0] ** 2 + x[..., 1] ** 2)


def ikeda(u=(0.7, 0.02)) -> TransferModel:
    def transfer(x, c, t):
        a = ikeda_angle(x)
        ca, sa = np.cos(a), np.sin(a)
        u_ = c[:, 0]
        return np.stack([1.0 + u_ * (x[:, 0] * ca - x[:, 1] * sa),
                         u_ * (x[:, 0] * sa + x[:, 1] * ca)], axis=1)

    return TransferModel("ikeda", 2, 1, ParamDensitySet([_gauss(*u)]), transfer,
                         description="Ikeda map with random u", settings={"u": tuple(u)})


def lozi(a=(1.55, 0.1), b: float = 0.3) -> TransferModel:
    def transfer(x, c, t):
        return np.stack([1.0 - c[:, 0] * np.abs(x[:, 0]) + x[:, 1], b * x[:, 0]], axis=1)

    return TransferModel("lozi", 2, 1, ParamDensitySet([_gauss(*a)]), transfer,
                         description="Lozi map with random a", settings={"a": tuple(a), "b": b})


def ornstein_uhlenbeck_2d(dt: float = 0.025, sigma1: float = 0.4,
                          sigma2: float = 0.6) -> TransferModel:
    sig = np.array([sigma1, sigma2])

    def transfer(x, w, t):
        return x - x * dt + sig * w

    sq = math.sqrt(dt)
    return TransferModel("ornstein_uhlenbeck_2d", 2, 2,
                         ParamDensitySet([_gauss(0.0, sq), _gauss(0.0, sq)]), transfer, dt=dt,
                         description="2D Ornstein-Uhlenbeck, Euler-Maruyama step",
                         settings=dict(dt=dt, sigma1=sigma1, sigma2=sigma2))


REGISTRY = {
    "additive_diffusion": additive_diffusion,
    "rosenzweig_mcarthur_rde": rosenzweig_mcarthur_rde,
    "rosenzweig_mcarthur_sde": rosenzweig_mcarthur_sde,
    "fdgd2_two_minima": fdgd2_two_minima,
    "fdgd3_himmelblau": fdgd3_himmelblau,
    "ikeda": ikeda,
    "lozi": lozi,
    "ornstein_uhlenbeck_2d": ornstein_uhlenbeck_2d,
}


class UnknownModelError(KeyError):
    kind = "unknown-model"

    def __str__(self):
        return self.args[0]


def get_model(name: str, **overrides) -> TransferModel:
    try:
        factory = REGISTRY[name]
    except KeyError:
        close = difflib.get_close_matches(name, REGISTRY, n=3, cutoff=0.5)
        hint = f"; did you mean {', '.join(close)}?" if close else ""
        raise UnknownModelError(
            f"unknown model {name!r}{hint} (valid: {', '.join(sorted(REGISTRY))})") from None
    return factory(**overrides)


def list_models() -> list:
    return list(REGISTRY)

# zero-noise standard deviations stated alongside each experiment
PRESET_SIGMA_B = {
    "rosenzweig_mcarthur_rde": 0.005,
    "fdgd2_two_minima": 0.02,
    "fdgd3_himmelblau": 0.02,
    "ornstein_uhlenbeck_2d": 0.0025,
}
