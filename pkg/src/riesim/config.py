"""Run configuration files.

A config is an INI-style text with sections ``[model]``, ``[grid]``,
``[init]``, ``[propagation]`` and ``[output]``.  Vectors are comma
separated.  Example::

    [model]
    name = ornstein_uhlenbeck_2d
    dt = 0.025

    [grid]
    lo = -1.0, -1.0
    hi = 1.5, 1.5
    n_cells = 192, 192

    [init]
    kind = uniform
    lo = 0.9775, 0.7775
    hi = 1.0225, 0.8225

    [propagation]
    P = 48000
    iterations = 109
    sigma_B = 0.0025

Defaults: ``n_cells = 256`` per axis, ``P = 48000``, ``iterations = 100``,
``seed = 0``, snapshots at the last iteration only, no stop tolerance,
``reuse_param_batch = false``, ``workers = 1``, output to ``out/<model>``
with ``formats = csv, pgm`` and ``heatmap_scale = linear``.  ``sigma_B``
falls back to the model's preset value where one exists.
"""

from __future__ import annotations

import configparser
import inspect
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .density import DensityGrid, GridGeometry, new_gaussian, new_uniform
from .errors import ConfigError, RieError
from .models import PRESET_SIGMA_B, REGISTRY, TransferModel, UnknownModelError, get_model
from .propagate import PropagationConfig

DEFAULT_N_CELLS = 256
DEFAULT_P = 48000
DEFAULT_ITERATIONS = 100
FORMATS = ("csv", "pgm")


@dataclass
class InitSpec:
    kind: str
    lo: tuple = ()
    hi: tuple = ()
    mean: tuple = ()
    std: tuple = ()

    def build(self, geometry: GridGeometry) -> DensityGrid:
        if self.kind == "uniform":
            return new_uniform(geometry, self.lo, self.hi)
        return new_gaussian(geometry, self.mean, self.std)


@dataclass
class RunDescription:
    model_name: str
    model_overrides: dict
    model: TransferModel
    geometry: GridGeometry
    init: InitSpec
    propagation: PropagationConfig
    output_dir: Path
    formats: tuple = FORMATS
    heatmap_scale: str = "linear"
    source: Optional[str] = None
    extras: dict = field(default_factory=dict)

    def initial_density(self) -> DensityGrid:
        return self.init.build(self.geometry)

    def with_overrides(self, *, seed=None, workers=None, output_dir=None, formats=None,
                       P=None, n_iterations=None) -> "RunDescription":
        prop = self.propagation
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if workers is not None:
            changes["workers"] = int(workers)
        if P is not None:
            changes["P"] = int(P)
        if n_iterations is not None:
            changes["n_iterations"] = int(n_iterations)
            changes["snapshot_iterations"] = tuple(
                s for s in prop.snapshot_iterations if s <= int(n_iterations)) or (int(n_iterations),)
        if changes:
            prop = replace(prop, **changes)
        return replace(self, propagation=prop,
                       output_dir=Path(output_dir) if output_dir is not None else self.output_dir,
                       formats=tuple(formats) if formats is not None else self.formats)


class _Collector:
    def __init__(self, parser):
        self.cp = parser
        self.errors = []

    def get(self, section, key, default=None, required=False):
        if self.cp.has_option(section, key):
            return self.cp.get(section, key).strip()
        if required:
            self.errors.append(f"[{section}] missing required key {key!r}")
        return default

    def number(self, section, key, conv=float, default=None, required=False):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except ValueError:
            self.errors.append(f"[{section}] {key} = {raw!r} is not a valid {conv.__name__}")
            return default

    def vector(self, section, key, conv=float, default=None, required=False, length=None):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            vals = tuple(conv(v) for v in raw.replace(" ", "").split(",") if v != "")
        except ValueError:
            self.errors.append(f"[{section}] {key} = {raw!r} is not a list of {conv.__name__}")
            return default
        if length is not None and len(vals) not in (1, length):
            self.errors.append(f"[{section}] {key} needs {length} values, got {len(vals)}")
            return default
        if length is not None and len(vals) == 1:
            vals = vals * length
        return vals

    def flag(self, section, key, default=False):
        raw = self.get(section, key)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        self.errors.append(f"[{section}] {key} = {raw!r} is not a boolean")
        return default


def _override_value(raw: str):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    vals = tuple(float(p) for p in parts)
    return vals[0] if len(vals) == 1 else vals


def parse_config(text: str, source: Optional[str] = None) -> RunDescription:
    """Parse and validate a run config, raising :class:`ConfigError` with all problems."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    c = _Collector(cp)
    known = {"model", "grid", "init", "propagation", "output"}
    for sec in cp.sections():
        if sec not in known:
            c.errors.append(f"unknown section [{sec}]")

    # model
    name = c.get("model", "name", required=True) if cp.has_section("model") else None
    if not cp.has_section("model"):
        c.errors.append("missing [model] section")
    model = None
    overrides = {}
    if name is not None:
        if name not in REGISTRY:
            try:
                get_model(name)
            except UnknownModelError as exc:
                c.errors.append(str(exc))
        else:
            params = inspect.signature(REGISTRY[name]).parameters
            for key, raw in cp.items("model"):
                if key == "name":
                    continue
                if key not in params:
                    c.errors.append(f"[model] {name} has no parameter {key!r} "
                                    f"(valid: {', '.join(params) or 'none'})")
                    continue
                try:
                    overrides[key] = _override_value(raw)
                except ValueError:
                    c.errors.append(f"[model] {key} = {raw!r} is not numeric")
            try:
                model = get_model(name, **overrides)
            except (TypeError, ValueError) as exc:
                c.errors.append(f"[model] invalid parameters for {name}: {exc}")

    # grid
    lo = c.vector("grid", "lo", required=True)
    hi = c.vector("grid", "hi", required=True)
    R = len(lo) if lo else (model.R if model else 2)
    n_cells = c.vector("grid", "n_cells", int, default=(DEFAULT_N_CELLS,) * R, length=R)
    geometry = None
    if lo is not None and hi is not None and n_cells is not None:
        try:
            geometry = GridGeometry(lo, hi, n_cells)
        except RieError as exc:
            c.errors.append(f"[grid] {exc}")
    if geometry is not None and model is not None:
        c.errors.extend(f"[grid] {e}" for e in model.check_geometry(geometry))

    # initial density
    kind = c.get("init", "kind", "uniform")
    init = None
    if kind == "uniform":
        init = InitSpec("uniform", lo=c.vector("init", "lo", required=True, length=R),
                        hi=c.vector("init", "hi", required=True, length=R))
    elif kind == "gaussian":
        init = InitSpec("gaussian", mean=c.vector("init", "mean", required=True, length=R),
                        std=c.vector("init", "std", required=True, length=R))
    else:
        c.errors.append(f"[init] kind = {kind!r} must be 'uniform' or 'gaussian'")
    if init is not None and geometry is not None and not c.errors:
        try:
            init.build(geometry)
        except (RieError, ValueError) as exc:
            c.errors.append(f"[init] {exc}")

    # propagation
    P = c.number("propagation", "P", int, DEFAULT_P)
    iterations = c.number("propagation", "iterations", int, DEFAULT_ITERATIONS)
    sigma_B = c.vector("propagation", "sigma_B", length=R)
    if sigma_B is None and name in PRESET_SIGMA_B:
        sigma_B = (PRESET_SIGMA_B[name],) * R
    if sigma_B is None and name is not None:
        c.errors.append(f"[propagation] sigma_B is required for model {name!r}")
    seed = c.number("propagation", "seed", int, 0)
    snapshots = c.vector("propagation", "snapshots", int, default=None)
    stop_tol = c.number("propagation", "stop_tolerance", float, None)
    reuse = c.flag("propagation", "reuse_param_batch", False)
    workers = c.number("propagation", "workers", int, 1)
    prop = None
    if geometry is not None and sigma_B is not None and P is not None and iterations is not None:
        try:
            prop = PropagationConfig(
                P=P, n_iterations=iterations, sigma_B=sigma_B, geometry=geometry,
                snapshot_iterations=snapshots if snapshots is not None else (iterations,),
                seed=seed, stop_tolerance=stop_tol, reuse_param_batch=reuse, workers=workers)
        except ValueError as exc:
            c.errors.append(f"[propagation] {exc}")

    # output
    outdir = Path(c.get("output", "directory", f"out/{name or 'run'}"))
    formats = c.vector("output", "formats", str, default=FORMATS)
    if formats is not None:
        bad = [f for f in formats if f not in FORMATS]
        if bad:
            c.errors.append(f"[output] unknown formats {bad} (valid: {', '.join(FORMATS)})")
    scale = c.get("output", "heatmap_scale", "linear")
    if scale not in ("linear", "log"):
        c.errors.append(f"[output] heatmap_scale = {scale!r} must be linear or log")

    if c.errors:
        raise ConfigError(c.errors)
    return RunDescription(name, overrides, model, geometry, init, prop, outdir,
                          tuple(formats), scale, source)


def load_config(path) -> RunDescription:
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def packaged_config_names() -> list:
    root = resources.files("riesim") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def packaged_config_text(name: str) -> str:
    if not name.endswith(".cfg"):
        name += ".cfg"
    return (resources.files("riesim") / "configs" / name).read_text()


def load_packaged(name: str) -> RunDescription:
    return parse_config(packaged_config_text(name), source=f"riesim/configs/{name}")
