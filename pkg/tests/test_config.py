"""Configuration parsing, presets, manifest plumbing, CSV formatting."""
import json

import numpy as np
import pytest

from memoplate.errors import ConfigError
from memoplate.config import (
    ExperimentConfig, Manifest, default_config, emit_plots, format_cell,
    load_config, preset, write_csv,
)


def test_default_config_roundtrip():
    cfg = default_config()
    assert cfg.seed == 1234
    assert cfg.mode_count == 8
    assert cfg.horizon == pytest.approx(20.0)
    assert cfg.weight_policy == "auto"
    assert cfg.domain().kind == "interval"


def test_presets_exist():
    for name in ("thm-edec", "thm-gp1", "thm-gp2", "thm-a2", "thm-a3", "oracle-crosscheck"):
        cfg = preset(name)
        assert isinstance(cfg, ExperimentConfig)
    with pytest.raises(ConfigError):
        preset("thm-gp3")


def test_preset_values_pinned():
    edec = preset("thm-edec")
    assert edec.mode_count == 16
    grid = edec.parameter_grid()
    assert [row[1] for row in grid] == [0.0, 0.25, 0.5, 1.0]
    assert all(row[0] == 0.5 and row[2] == 0.5 for row in grid)

    gp2 = preset("thm-gp2")
    grid2 = gp2.parameter_grid()
    assert len(grid2) == 25
    assert all(t == 0.0 for (_, t, _) in grid2)
    vals = sorted({s for (s, _, _) in grid2}, reverse=True)
    assert vals == [2.0 ** -k for k in range(2, 7)]

    gp1 = preset("thm-gp1")
    grid1 = gp1.parameter_grid()
    assert len(grid1) == 5
    assert all(s == t == e for (s, t, e) in grid1)
    assert gp1.with_history

    a2 = preset("thm-a2")
    ap = a2.probe_params()
    assert ap.alpha == 1.0 and ap.coupling == 1.0 and ap.omega1 == 0.25
    assert not ap.with_shear


def test_load_config_merges_and_validates(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[domain]\nmodes = 3\n\n[integrator]\nhorizon = 2.5\n")
    cfg = load_config(str(path))
    assert cfg.mode_count == 3
    assert cfg.horizon == pytest.approx(2.5)
    assert cfg.seed == 1234  # untouched default

    bad = tmp_path / "bad.ini"
    bad.write_text("[domain]\nmodez = 3\n")
    with pytest.raises(ConfigError, match="domain"):
        load_config(str(bad))
    bad2 = tmp_path / "bad2.ini"
    bad2.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError, match="nope"):
        load_config(str(bad2))


def test_typed_accessor_errors(tmp_path):
    path = tmp_path / "t.ini"
    path.write_text("[integrator]\nhorizon = soon\n")
    cfg = load_config(str(path))
    with pytest.raises(ConfigError, match=r"\[integrator\] horizon"):
        cfg.horizon


def test_parameter_grid_shapes(tmp_path):
    path = tmp_path / "g.ini"
    path.write_text("[parameters]\nsigma = 0.5, 0.25\ntau = 0\neps = 0.5, 0.25\ngrid = product\n")
    cfg = load_config(str(path))
    assert len(cfg.parameter_grid()) == 4
    path2 = tmp_path / "d.ini"
    path2.write_text("[parameters]\nsigma = 0.5, 0.25\ntau = 0\neps = 0.5, 0.25\ngrid = diagonal\n")
    cfg2 = load_config(str(path2))
    grid = cfg2.parameter_grid()  # singleton tau broadcasts
    assert grid == [(0.5, 0.0, 0.5), (0.25, 0.0, 0.25)]
    path3 = tmp_path / "m.ini"
    path3.write_text("[parameters]\nsigma = 0.5, 0.25, 0.1\ntau = 0\neps = 0.5, 0.25\ngrid = diagonal\n")
    with pytest.raises(ConfigError):
        load_config(str(path3)).parameter_grid()


def test_dt_auto_honors_relaxation_scales(tmp_path):
    path = tmp_path / "auto.ini"
    path.write_text("[integrator]\ndt = auto\n")
    cfg = load_config(str(path))
    assert cfg.dt_for(0.5, 0.0, 0.5) == pytest.approx(1e-3)
    assert cfg.dt_for(0.01, 0.0, 0.5) == pytest.approx(0.01 / 20)
    # explicit dt wins over the relaxation scales
    assert default_config().dt_for(0.01, 0.0, 0.5) == pytest.approx(1e-3)


def test_config_hash_stable_and_sensitive():
    a, b = default_config(), default_config()
    assert a.config_hash() == b.config_hash()
    c = preset("thm-edec")
    assert c.config_hash() != a.config_hash()


def test_format_cell():
    assert format_cell(True) == "true"
    assert format_cell(3) == "3"
    assert format_cell(0.5) == "0.5"
    assert len(format_cell(np.pi)) >= 17
    assert format_cell("x") == "x"


def test_write_csv_deterministic(tmp_path):
    rows = [[1.0 / 3.0, 7, "a"], [2.0, -1, "b"]]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(str(p1), ["x", "n", "s"], rows)
    write_csv(str(p2), ["x", "n", "s"], rows)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().strip().split("\n")
    assert lines[0] == "x,n,s"
    assert len(lines) == 3


def test_manifest_written_with_steps(tmp_path):
    cfg = default_config()
    man = Manifest("demo", cfg, None)
    man.step("stage-one", "ok", "fine")
    man.output(str(tmp_path / "data.csv"))
    man.write(str(tmp_path))
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["command"] == "demo"
    assert data["config_hash"] == cfg.config_hash()
    assert data["steps"][0]["name"] == "stage-one"
    assert "wall_time_s" in data and "versions" in data
    assert data["versions"]["memoplate"]


def test_emit_plots_per_artifact(tmp_path):
    (tmp_path / "energy_0.csv").write_text("t,energy\n0,1\n")
    (tmp_path / "energy_1.csv").write_text("t,energy\n0,1\n")
    (tmp_path / "sweep.csv").write_text("sigma\n0.5\n")
    manifest_data = {"outputs": [str(tmp_path / n) for n in
                                 ("energy_0.csv", "energy_1.csv", "sweep.csv")]}
    emit_plots(manifest_data, str(tmp_path))
    names = {p.name for p in tmp_path.glob("plot_*.py")}
    assert "plot_energy_0.py" in names and "plot_energy_1.py" in names
    assert "plot_convergence.py" in names
    # empty manifest emits nothing
    empty = tmp_path / "empty"
    empty.mkdir()
    emit_plots({"outputs": []}, str(empty))
    assert list(empty.glob("plot_*.py")) == []
