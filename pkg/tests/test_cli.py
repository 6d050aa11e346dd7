import csv
import json

import pytest

from cimtraj.cli import _fit_grid, main, preset, state_from_spec
from cimtraj.errors import ConfigError
from cimtraj.grid import make_grid


def write_config(path, **kw):
    d = {"rounds": 3, "n_traj": 2, "base_seed": 4}
    d.update(kw)
    path.write_text(json.dumps(d))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_validate_is_green(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_run_requires_config(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_missing_and_malformed_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"T": 0.9,\n "rounds": }')
    assert main(["run", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "bad.json:2:" in err and "^" in err


def test_run_writes_outputs(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--trajectories", "3"]) == 0
    rows = read_rows(out / "series.csv")
    assert rows[0][:3] == ["round", "P", "P_err"]
    assert len(rows) == 1 + 4
    assert float(rows[1][1]) == pytest.approx(0.5, abs=1e-12)
    records = read_rows(out / "records.csv")
    assert len(records) == 1 + 3 * 3 * 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["completed"] == 3 and manifest["seeds"] == [4, 6]
    assert len(manifest["config_sha256"]) == 64


def test_run_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b), "--workers", "2"]) == 0
    for name in ("series.csv", "records.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_partial_ensemble_exit_code(tmp_path):
    cfg = write_config(tmp_path / "c.json", x_max=10.0, n_points=129, G_tot=1.15, L=0.0, R=0.0, rounds=8)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 8


def test_export_state(tmp_path):
    assert main(["export", "--state", "cat:2", "--out", str(tmp_path), "--stride", "8"]) == 0
    assert (tmp_path / "contour_cat_2.csv").exists()
    assert (tmp_path / "wigner_cat_2.csv").exists()
    assert main(["export", "--state", "banana:1", "--out", str(tmp_path)]) == 2


def test_export_from_run(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert main(["export", "--config", str(cfg), "--round", "2", "--pulse", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "contour_seed4_N2_pulse2.csv").exists()


def test_state_specs():
    g = make_grid()
    for spec in ("vacuum", "coherent:1", "squeezed:0.3", "cat:2", "mixture:2", "thermal:2", "fock:3"):
        assert state_from_spec(spec, g).trace == pytest.approx(1.0, abs=1e-6)
    for spec in ("coherent", "coherent:x", "nope:1"):
        with pytest.raises(ConfigError):
            state_from_spec(spec, g)


def test_figure_presets_with_short_runs(tmp_path):
    cfg = tmp_path / "short.json"
    cfg.write_text('{"rounds": 2, "n_traj": 2}')
    out = tmp_path / "f"
    common = ["--config", str(cfg), "--out", str(out), "--stride", "16"]
    assert main(["figure3", *common]) == 0
    assert (out / "fig3_N0_pulse1_front.csv").exists()
    assert (out / "fig3_series.csv").exists()
    assert main(["figure", "--figure", "6", *common, "--t-prime", "1.0"]) == 0
    rows = read_rows(out / "fig6_slow_Tp1.csv")
    assert rows[0] == ["round", "P", "P_err"] and len(rows) == 4


def test_figure6_widens_grid_for_heavy_loss():
    base = preset("table2")
    kept = _fit_grid(base.replace(T_prime=1.0))
    assert (kept.x_max, kept.n_points) == (base.x_max, base.n_points)
    spacing = base.x_max / (base.n_points - 1)
    for tp, x_max in ((0.7, 16.0), (0.5, 22.0)):
        wide = _fit_grid(base.replace(T_prime=tp))
        assert wide.x_max == x_max
        assert wide.x_max / (wide.n_points - 1) == pytest.approx(spacing)
