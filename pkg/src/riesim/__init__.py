"""Full-density simulation of random iteration equations."""

from .density import (
    DensityGrid,
    GridGeometry,
    MomentSummary,
    l1_distance,
    mode,
    moments,
    new_gaussian,
    new_uniform,
    normalize,
)
from .models import TransferModel, get_model, list_models
from .propagate import PropagationConfig, Trajectory, ZeroNoiseSpec, run, step
from .sampling import GaussianSpec, ParamDensitySet, RngStream, SampleBatch, UniformSpec

__version__ = "0.1.0"

__all__ = [
    "DensityGrid", "GridGeometry", "MomentSummary", "l1_distance", "mode", "moments",
    "new_gaussian", "new_uniform", "normalize", "TransferModel", "get_model", "list_models",
    "PropagationConfig", "Trajectory", "ZeroNoiseSpec", "run", "step", "GaussianSpec",
    "ParamDensitySet", "RngStream", "SampleBatch", "UniformSpec",
]
