"""Command-line front end.

    riesim run CONFIG          full experiment -> snapshots, moments.csv, heatmaps
    riesim verify-ou           OU run compared with its closed-form moments
    riesim refcheck MODEL      Euler vs fine-step RK4 paths of the zero-noise system
    riesim overlap CONFIG      full-density result vs pathwise histogram
    riesim list-models

Failures exit nonzero after printing one line ``riesim: error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, load_packaged, packaged_config_names
from .errors import ConfigError, RieError
from .fileio import RunLock, write_heatmap, write_moments_csv, write_snapshot
from .models import UnknownModelError, get_model, list_models
from .propagate import run as propagate_run
from .sampling import sample_grid_direct
from .verify import (
    OuAnalyticParams,
    deterministic_reference,
    ou_analytic_moments,
    overlap_coefficient,
    pathwise_histogram,
)

log = logging.getLogger("riesim")

# start points used for the step-size impression: vertices of each initial box
REFCHECK_STARTS = {
    "rosenzweig_mcarthur_rde": [(0.1, 0.1), (0.5, 0.5)],
    "rosenzweig_mcarthur_sde": [(0.4, 0.4), (0.6, 0.6)],
    "ornstein_uhlenbeck_2d": [(1.0, 0.8)],
}


def _resolve_config(name_or_path):
    p = Path(name_or_path)
    if p.exists():
        return load_config(p)
    name = name_or_path if name_or_path.endswith(".cfg") else name_or_path + ".cfg"
    if name in packaged_config_names():
        return load_packaged(name)
    raise ConfigError(f"config {name_or_path!r} not found (packaged: {', '.join(packaged_config_names())})")


def _apply_globals(desc, args):
    formats = args.format.split(",") if args.format else None
    return desc.with_overrides(seed=args.seed, workers=args.threads, output_dir=args.outdir,
                               formats=formats)


def _progress(every):
    def cb(it, grid):
        if it % every == 0:
            log.info("iteration %d", it)
    return cb


def execute_run(desc) -> dict:
    """Run one configured experiment and write all of its output files."""
    out = desc.output_dir
    with RunLock(out):
        init = desc.initial_density()
        t0 = time.perf_counter()
        traj = propagate_run(init, desc.model, desc.propagation, callback=_progress(10))
        elapsed = time.perf_counter() - t0
        seed = desc.propagation.seed
        for snap in traj.snapshots:
            stem = out / f"snap_{snap.iteration:06d}"
            if "csv" in desc.formats:
                write_snapshot(snap.grid, stem.with_suffix(".csv"), snap.iteration, seed,
                               desc.model_name)
            if "pgm" in desc.formats:
                write_heatmap(snap.grid, stem.with_suffix(".pgm"), desc.heatmap_scale)
        write_moments_csv(traj, out / "moments.csv")
        meta = dict(traj.metadata, stop_reason=traj.stop_reason,
                    final_iteration=traj.final_iteration, config=desc.source,
                    snapshots=[s.iteration for s in traj.snapshots])
        (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    log.info("run finished in %.1fs (%s)", elapsed, traj.stop_reason)
    return dict(meta, trajectory=traj)


def cmd_run(args):
    desc = _apply_globals(_resolve_config(args.config), args)
    res = execute_run(desc)
    print(f"{desc.model_name}: {res['final_iteration']} iterations ({res['stop_reason']}) "
          f"-> {desc.output_dir}")
    return 0


def ou_comparison(traj, params: OuAnalyticParams, every: int = 10) -> list:
    rows = []
    for it, t, m in traj.moment_trace:
        if it == 0 or it % every:
            continue
        a = ou_analytic_moments(params, t)
        rows.append(dict(iteration=it, t=t, mean_sim=m.mean, mean_ana=a.mean,
                         var_sim=m.variance, var_ana=a.variance))
    return rows


def cmd_verify_ou(args):
    desc = _resolve_config(args.config)
    desc = desc.with_overrides(P=args.samples, n_iterations=args.iterations)
    desc = _apply_globals(desc, args)
    if args.outdir is None:
        desc = desc.with_overrides(output_dir="out/verify_ou")
    s = desc.model.settings
    params = OuAnalyticParams(x0=tuple(args.x0), sigma=(s["sigma1"], s["sigma2"]))
    res = execute_run(desc)
    rows = ou_comparison(res["trajectory"], params, args.every)
    path = desc.output_dir / "verify_ou.csv"
    cols = ["iteration", "t", "mean_sim1", "mean_sim2", "mean_ana1", "mean_ana2",
            "var_sim1", "var_sim2", "var_ana1", "var_ana2"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r["iteration"]] + [f"{v:.6g}" for v in
                       [r["t"], *r["mean_sim"], *r["mean_ana"], *r["var_sim"], *r["var_ana"]]])
    print(" ".join(f"{c:>10}" for c in cols[1:]))
    worst_mean = worst_var = 0.0
    for r in rows:
        vals = [r["t"], *r["mean_sim"], *r["mean_ana"], *r["var_sim"], *r["var_ana"]]
        print(" ".join(f"{v:10.5f}" for v in vals))
        worst_mean = max(worst_mean, float(np.max(np.abs(r["mean_sim"] - r["mean_ana"]))))
        worst_var = max(worst_var, float(np.max(np.abs(r["var_sim"] - r["var_ana"]) / r["var_ana"])))
    print(f"max |mean error| = {worst_mean:.4f}; max relative variance error = {worst_var:.3f}")
    return 0


def cmd_refcheck(args):
    model = get_model(args.model)
    if model.dt is None:
        raise RieError(f"model {args.model!r} is not a discretized differential equation")
    starts = [tuple(args.x0)] if args.x0 else REFCHECK_STARTS.get(args.model)
    if not starts:
        raise RieError(f"no default start for {args.model!r}; pass --x0")
    out = Path(args.outdir or "out/refcheck")
    out.mkdir(parents=True, exist_ok=True)
    for k, x0 in enumerate(starts):
        ref = deterministic_reference(model, x0, args.t_end, args.dt)
        stride = (len(ref.rk4_t) - 1) // (len(ref.euler_t) - 1)
        path = out / f"refcheck_{args.model}_{k}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            R = ref.euler_x.shape[1]
            w.writerow(["t"] + [f"euler{r + 1}" for r in range(R)] + [f"rk4_{r + 1}" for r in range(R)])
            for t, e, r in zip(ref.euler_t, ref.euler_x, ref.rk4_x[::stride]):
                w.writerow([f"{t:.6g}"] + [f"{v:.10g}" for v in (*e, *r)])
        print(f"{args.model} x0={x0}: max |euler - rk4| = {ref.max_deviation():.5f} -> {path}")
    return 0


def cmd_overlap(args):
    desc = _apply_globals(_resolve_config(args.config), args)
    if args.iterations is not None:
        desc = desc.with_overrides(n_iterations=args.iterations)
    init = desc.initial_density()
    traj = propagate_run(init, desc.model, desc.propagation, callback=_progress(10))
    rng = np.random.default_rng([desc.propagation.seed, 7])
    hist = pathwise_histogram(desc.model, lambda n, r: sample_grid_direct(init, n, r),
                              traj.final_iteration, args.paths, desc.geometry, rng)
    ov = overlap_coefficient(traj.final, hist)
    print(f"{desc.model_name}: iteration {traj.final_iteration}, overlap = {ov:.4f} "
          f"({hist.n_outside} of {hist.n_paths} paths outside the window)")
    return 0


def cmd_list_models(args):
    for name in list_models():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    def add_globals(p, default):
        p.add_argument("--seed", type=int, default=default, help="override the config seed")
        p.add_argument("--outdir", default=default, help="output directory")
        p.add_argument("--threads", type=int, default=default, help="worker count")
        p.add_argument("--format", default=default, help="comma list of csv,pgm")
        p.add_argument("-v", "--verbose", action="count", default=default)

    parser = argparse.ArgumentParser(prog="riesim", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    add_globals(parser, None)
    shared = argparse.ArgumentParser(add_help=False)
    add_globals(shared, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[shared], help="run a configured experiment")
    p.add_argument("config", help="config path or packaged config name")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-ou", parents=[shared], help="OU moments vs closed form")
    p.add_argument("--config", default="ou.cfg")
    p.add_argument("--samples", type=int, default=48000, help="P (desk scale by default)")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--every", type=int, default=10)
    p.add_argument("--x0", type=float, nargs=2, default=(1.0, 0.8))
    p.set_defaults(func=cmd_verify_ou)

    p = sub.add_parser("refcheck", parents=[shared], help="Euler vs RK4 reference paths")
    p.add_argument("model")
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--t-end", type=float, default=50.0)
    p.add_argument("--dt", type=float, default=None, help="Euler step (default: model dt)")
    p.set_defaults(func=cmd_refcheck)

    p = sub.add_parser("overlap", parents=[shared], help="full-density vs pathwise histogram")
    p.add_argument("config")
    p.add_argument("--paths", type=int, default=1_000_000)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("list-models", parents=[shared], help="print registered model names")
    p.set_defaults(func=cmd_list_models)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RieError, UnknownModelError, ValueError, OSError) as exc:
        kind = getattr(exc, "kind", type(exc).__name__)
        msg = " ".join(str(exc).split())
        print(f"riesim: error: {kind}: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1


if __name__ == "__main__":
    sys.exit(main())
