"""Snapshot CSV, moments CSV and PGM heatmap files."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .density import DensityGrid, GridGeometry
from .errors import LockError, SnapshotFormatError

LOCK_NAME = ".rie-lock"


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _vec(values) -> str:
    return ",".join(_fmt(v) for v in values)


def write_snapshot(grid: DensityGrid, path, iteration=None, seed=None, model=None):
    """Write ``grid`` as ``#`` header lines plus one comma-separated line per grid row.

    A row is ``values[i, :]`` (fixed first-component index); 1-D grids take a
    single line.  17 significant digits make the round trip bit-exact.
    """
    g = grid.geometry
    lines = [f"# geometry: lo={_vec(g.lo)} hi={_vec(g.hi)} n_cells={','.join(map(str, g.n_cells))}"]
    if iteration is not None:
        lines.append(f"# iteration: {int(iteration)}")
    if seed is not None:
        lines.append(f"# seed: {int(seed)}")
    if model is not None:
        lines.append(f"# model: {model}")
    rows = grid.values.reshape(1, -1) if g.R == 1 else grid.values
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header(lines):
    meta = {}
    for line in lines:
        key, _, rest = line[1:].partition(":")
        meta[key.strip()] = rest.strip()
    if "geometry" not in meta:
        raise SnapshotFormatError("missing '# geometry:' header")
    fields = dict(item.split("=", 1) for item in meta["geometry"].split())
    try:
        geometry = GridGeometry(
            tuple(float(v) for v in fields["lo"].split(",")),
            tuple(float(v) for v in fields["hi"].split(",")),
            tuple(int(v) for v in fields["n_cells"].split(",")),
        )
    except (KeyError, ValueError) as exc:
        raise SnapshotFormatError(f"bad geometry header: {meta['geometry']!r}") from exc
    out = {"geometry": geometry}
    for key in ("iteration", "seed"):
        if key in meta:
            out[key] = int(meta[key])
    if "model" in meta:
        out["model"] = meta["model"]
    return out


def _split(path):
    text = Path(path).read_text().splitlines()
    header = [ln for ln in text if ln.startswith("#")]
    data = [ln for ln in text if ln.strip() and not ln.startswith("#")]
    return header, data


def read_snapshot_header(path) -> dict:
    header, _ = _split(path)
    return _parse_header(header)


def read_snapshot(path) -> DensityGrid:
    header, data = _split(path)
    g = _parse_header(header)["geometry"]
    n_rows, n_cols = (1, g.n_cells[0]) if g.R == 1 else g.n_cells
    if len(data) != n_rows:
        raise SnapshotFormatError(f"shape mismatch: expected {n_rows} data lines, found {len(data)}")
    rows = []
    for i, line in enumerate(data):
        parts = line.split(",")
        if len(parts) != n_cols:
            raise SnapshotFormatError(
                f"shape mismatch: data line {i + 1} has {len(parts)} values, expected {n_cols}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SnapshotFormatError(f"data line {i + 1}: {exc}") from exc
    return DensityGrid(g, np.array(rows).reshape(g.shape))


def heatmap_pixels(grid: DensityGrid, scale: str = "linear") -> np.ndarray:
    """8-bit image, first component left-to-right and second bottom-to-top."""
    v = np.asarray(grid.values, dtype=float)
    vmax = v.max()
    rel = v / vmax if vmax > 0 else np.zeros_like(v)
    if scale == "linear":
        level = 255.0 * rel
    elif scale == "log":
        level = 255.0 * np.log1p(255.0 * rel) / np.log(256.0)
    else:
        raise ValueError(f"unknown heatmap scale {scale!r} (use linear or log)")
    pix = np.clip(np.rint(level), 0, 255).astype(np.uint8)
    if grid.geometry.R == 1:
        return pix.reshape(1, -1)
    return pix.T[::-1]


def write_heatmap(grid: DensityGrid, path, scale: str = "linear"):
    pix = heatmap_pixels(grid, scale)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5 {w} {h} 255\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head, body = raw.split(b"\n", 1)
    magic, w, h, maxval = head.split()
    if magic != b"P5" or int(maxval) != 255:
        raise ValueError("not an 8-bit P5 PGM")
    return np.frombuffer(body, dtype=np.uint8).reshape(int(h), int(w))


def write_moments_csv(trajectory, path):
    R = len(trajectory.moment_trace[0][2].mean)
    cols = ["iteration", "t", "mean1", "var1"] if R == 1 else \
        ["iteration", "t", "mean1", "mean2", "var1", "var2", "cov12"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for it, t, m in trajectory.moment_trace:
            if R == 1:
                row = [it, t, m.mean[0], m.covariance[0, 0]]
            else:
                row = [it, t, *m.mean, m.covariance[0, 0], m.covariance[1, 1], m.covariance[0, 1]]
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]])


class RunLock:
    """Exclusive ownership of an output directory via a lock file."""

    def __init__(self, directory):
        self.path = Path(directory) / LOCK_NAME

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"output directory {self.path.parent} is locked by another run "
                            f"(remove {self.path} if stale)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False
