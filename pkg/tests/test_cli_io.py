import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riesim.cli import main
from riesim.config import packaged_config_names, load_packaged, parse_config
from riesim.density import DensityGrid, GridGeometry, new_uniform, normalize
from riesim.errors import ConfigError, LockError, SnapshotFormatError
from riesim.fileio import (
    LOCK_NAME,
    RunLock,
    heatmap_pixels,
    read_pgm,
    read_snapshot,
    read_snapshot_header,
    write_heatmap,
    write_snapshot,
)
from riesim.models import list_models

MINIMAL_OU = """
[model]
name = ornstein_uhlenbeck_2d

[grid]
lo = -1, -1
hi = 1.5, 1.5

[init]
lo = 0.9775, 0.7775
hi = 1.0225, 0.8225
"""

SMALL_OU = """
[model]
name = ornstein_uhlenbeck_2d

[grid]
lo = -1, -1
hi = 1.5, 1.5
n_cells = 48, 48

[init]
lo = 0.9, 0.7
hi = 1.1, 0.9

[propagation]
P = 2000
iterations = 3
sigma_B = 0.02
seed = 5
snapshots = 1, 3
"""


class TestConfig:
    def test_minimal_defaults(self):
        d = parse_config(MINIMAL_OU)
        assert d.model_name == "ornstein_uhlenbeck_2d"
        assert d.geometry.n_cells == (256, 256)
        p = d.propagation
        assert (p.P, p.n_iterations, p.seed) == (48000, 100, 0)
        assert p.sigma_B.sigma_B == (0.0025, 0.0025)
        assert p.snapshot_iterations == (100,)
        assert p.stop_tolerance is None and not p.reuse_param_batch
        assert d.formats == ("csv", "pgm")

    def test_typo_model(self):
        with pytest.raises(ConfigError, match="ikeda"):
            parse_config("[model]\nname = ikeda_typo\n[grid]\nlo = 0, 0\nhi = 1, 1\n"
                         "[init]\nlo = 0, 0\nhi = 1, 1\n[propagation]\nsigma_B = 0.01\n")

    def test_holling_window(self):
        text = ("[model]\nname = rosenzweig_mcarthur_rde\n[grid]\nlo = -1.2, 0\nhi = 1.2, 1.2\n"
                "[init]\nlo = 0.1, 0.1\nhi = 0.5, 0.5\n")
        with pytest.raises(ConfigError, match="Holling"):
            parse_config(text)

    def test_all_errors_collected(self):
        text = ("[model]\nname = lozi\nbogus = 1\n[grid]\nlo = 0, x\nhi = 1, 1\n"
                "[init]\nkind = cube\n[propagation]\nP = many\n[output]\nformats = png\n")
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert len(exc.value.errors) >= 4
        msg = str(exc.value)
        for fragment in ("bogus", "P", "cube", "png"):
            assert fragment in msg

    def test_sigma_required_without_preset(self):
        text = "[model]\nname = lozi\n[grid]\nlo = -1, -1\nhi = 1, 1\n[init]\nlo = 0, 0\nhi = 1, 1\n"
        with pytest.raises(ConfigError, match="sigma_B is required"):
            parse_config(text)

    def test_overrides_reach_model(self):
        d = parse_config(MINIMAL_OU.replace("ornstein_uhlenbeck_2d", "ornstein_uhlenbeck_2d\nsigma1 = 0.5"))
        assert d.model.settings["sigma1"] == 0.5

    @pytest.mark.parametrize("name", packaged_config_names())
    def test_packaged_parse(self, name):
        d = load_packaged(name)
        assert d.model_name in list_models()

    def test_packaged_set(self):
        assert {"rm_rde.cfg", "rm_sde.cfg", "fdgd2_two_minima.cfg", "fdgd3_himmelblau.cfg", "ikeda.cfg",
                "lozi.cfg", "ou.cfg"} <= set(packaged_config_names())

    def test_preset_parameters(self):
        ou = load_packaged("ou.cfg")
        assert ou.propagation.P == 384000 and ou.propagation.n_iterations == 109
        assert ou.model.dt == 0.025
        fd = load_packaged("fdgd2_two_minima.cfg")
        assert fd.propagation.P == 48000 and fd.propagation.sigma_B.sigma_B == (0.02, 0.02)


class TestSnapshot:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(2, 12))
    def test_round_trip(self, tmp_path_factory, seed, n0, n1):
        g = GridGeometry((-0.3, 1e-3), (2.0 / 3, 1.7), (n0, n1))
        v = np.random.default_rng(seed).random(g.shape) ** 5
        grid = normalize(DensityGrid(g, v))
        path = tmp_path_factory.mktemp("snap") / "s.csv"
        write_snapshot(grid, path, iteration=7, seed=seed, model="lozi")
        back = read_snapshot(path)
        assert back.geometry == g
        assert back.values.tobytes() == grid.values.tobytes()
        assert read_snapshot_header(path) == {"geometry": g, "iteration": 7, "seed": seed, "model": "lozi"}

    def test_1d(self, tmp_path):
        g = GridGeometry((-2,), (2,), (16,))
        grid = normalize(DensityGrid(g, np.arange(1.0, 17.0)))
        write_snapshot(grid, tmp_path / "a.csv")
        assert read_snapshot(tmp_path / "a.csv").values.tobytes() == grid.values.tobytes()

    def test_layout(self, tmp_path):
        g = GridGeometry((0, 0), (1, 1), (256, 256))
        write_snapshot(new_uniform(g, (0, 0), (1, 1)), tmp_path / "a.csv", 1, 0, "x")
        data = [ln for ln in (tmp_path / "a.csv").read_text().splitlines() if not ln.startswith("#")]
        assert len(data) == 256
        assert all(len(ln.split(",")) == 256 for ln in data)

    def test_tampered_row(self, tmp_path):
        g = GridGeometry((0, 0), (1, 1), (4, 5))
        path = tmp_path / "a.csv"
        write_snapshot(new_uniform(g, (0, 0), (1, 1)), path)
        lines = path.read_text().splitlines()
        lines[-1] = lines[-1] + ",0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SnapshotFormatError, match="shape mismatch"):
            read_snapshot(path)

    def test_missing_row(self, tmp_path):
        g = GridGeometry((0, 0), (1, 1), (4, 5))
        path = tmp_path / "a.csv"
        write_snapshot(new_uniform(g, (0, 0), (1, 1)), path)
        path.write_text("\n".join(path.read_text().splitlines()[:-1]) + "\n")
        with pytest.raises(SnapshotFormatError, match="shape mismatch"):
            read_snapshot(path)


class TestHeatmap:
    def test_uniform(self, tmp_path):
        g = GridGeometry((0, 0), (1, 1), (12, 7))
        write_heatmap(new_uniform(g, (0, 0), (1, 1)), tmp_path / "u.pgm")
        raw = (tmp_path / "u.pgm").read_bytes()
        assert raw.startswith(b"P5 12 7 255\n")
        assert len(raw) == len(b"P5 12 7 255\n") + 84
        assert np.all(read_pgm(tmp_path / "u.pgm") == 255)

    def test_delta(self, tmp_path):
        g = GridGeometry((0, 0), (1, 1), (10, 10))
        grid = new_uniform(g, (0.1, 0.8), (0.2, 0.9))  # cell (1, 8)
        pix = heatmap_pixels(grid)
        assert np.count_nonzero(pix) == 1 and pix.max() == 255
        # x1 runs left to right, x2 bottom to top
        assert pix[10 - 1 - 8, 1] == 255

    def test_log_scale(self):
        g = GridGeometry((0,), (1,), (3,))
        grid = normalize(DensityGrid(g, np.array([0.0, 1.0, 100.0])))
        pix = heatmap_pixels(grid, "log")[0]
        assert pix[0] == 0 and pix[2] == 255
        assert pix[1] == round(255 * np.log1p(2.55) / np.log(256))
        assert heatmap_pixels(grid, "linear")[0, 1] == 3

    def test_bad_scale(self):
        g = GridGeometry((0,), (1,), (3,))
        with pytest.raises(ValueError):
            heatmap_pixels(new_uniform(g, (0,), (1,)), "sqrt")


class TestLock:
    def test_exclusive(self, tmp_path):
        with RunLock(tmp_path):
            assert (tmp_path / LOCK_NAME).exists()
            with pytest.raises(LockError, match="locked"):
                with RunLock(tmp_path):
                    pass
        assert not (tmp_path / LOCK_NAME).exists()

    def test_cli_refuses_locked_dir(self, tmp_path, capsys):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(SMALL_OU)
        out = tmp_path / "out"
        out.mkdir()
        (out / LOCK_NAME).write_text("1\n")
        assert main(["run", str(cfg), "--outdir", str(out)]) == 1
        assert capsys.readouterr().err.startswith("riesim: error: lock: ")


class TestCli:
    def test_list_models(self, capsys):
        assert main(["list-models"]) == 0
        lines = capsys.readouterr().out.split()
        assert lines == list_models() and len(lines) == 8

    def test_run_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(SMALL_OU)
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--outdir", str(out)]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["moments.csv", "run.json", "snap_000001.csv", "snap_000001.pgm",
                         "snap_000003.csv", "snap_000003.pgm"]
        rows = list(csv.reader(open(out / "moments.csv")))
        assert rows[0] == ["iteration", "t", "mean1", "mean2", "var1", "var2", "cov12"]
        assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3"]
        meta = json.loads((out / "run.json").read_text())
        assert meta["seed"] == 5 and meta["final_iteration"] == 3
        assert read_snapshot_header(out / "snap_000003.csv")["iteration"] == 3

    def test_global_flags(self, tmp_path):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(SMALL_OU)
        out = tmp_path / "o"
        assert main(["--seed", "9", "run", str(cfg), "--outdir", str(out), "--format", "csv"]) == 0
        assert read_snapshot_header(out / "snap_000001.csv")["seed"] == 9
        assert not list(out.glob("*.pgm"))

    def test_byte_determinism(self, tmp_path):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(SMALL_OU)
        for d in ("a", "b"):
            assert main(["run", str(cfg), "--outdir", str(tmp_path / d), "--threads", "2"]) == 0
        for name in ("moments.csv", "snap_000001.csv", "snap_000003.csv", "snap_000003.pgm"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_verify_ou_table(self, tmp_path, capsys):
        out = tmp_path / "v"
        assert main(["verify-ou", "--samples", "4000", "--iterations", "20", "--outdir", str(out)]) == 0
        text = capsys.readouterr().out.splitlines()
        assert text[0].split() == ["t", "mean_sim1", "mean_sim2", "mean_ana1", "mean_ana2",
                                   "var_sim1", "var_sim2", "var_ana1", "var_ana2"]
        assert len(text) == 4  # header, t=0.25, t=0.5, summary
        assert float(text[2].split()[0]) == pytest.approx(0.5)
        rows = list(csv.reader(open(out / "verify_ou.csv")))
        assert len(rows) == 3 and rows[0][0] == "iteration"

    def test_refcheck(self, tmp_path, capsys):
        assert main(["refcheck", "ornstein_uhlenbeck_2d", "--t-end", "1", "--outdir", str(tmp_path)]) == 0
        rows = list(csv.reader(open(tmp_path / "refcheck_ornstein_uhlenbeck_2d_0.csv")))
        assert rows[0] == ["t", "euler1", "euler2", "rk4_1", "rk4_2"]
        assert float(rows[-1][1]) == pytest.approx(0.975 ** 40)
        assert "max |euler - rk4|" in capsys.readouterr().out

    def test_overlap(self, tmp_path, capsys):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(SMALL_OU)
        assert main(["overlap", str(cfg), "--paths", "20000"]) == 0
        assert "overlap = " in capsys.readouterr().out

    def test_unknown_model_exit(self, capsys):
        assert main(["refcheck", "ikeda_typo"]) == 1
        err = capsys.readouterr().err.strip()
        assert err.startswith("riesim: error: unknown-model: ") and "\n" not in err

    def test_bad_config_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[model]\nname = nope\n")
        assert main(["run", str(cfg)]) == 2
        assert capsys.readouterr().err.startswith("riesim: error: config: ")

    def test_missing_config(self, capsys):
        assert main(["run", "does_not_exist"]) == 2
