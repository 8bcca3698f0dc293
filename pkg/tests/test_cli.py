import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fewphoton import cli, multiphoton
from fewphoton.cli import ConfigError, build_config, load_config, main, parse_energy

from fixture_checks import check_outputs, read_csv

FIXTURE = Path(__file__).parent / "fixtures" / "n5"
COMMANDS = ("spectrum", "dynamics", "twophoton", "threelevel", "sweep")


def write_config(tmp_path, **raw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return path


def run(tmp_path, command, cfg_path=None, *extra, out="out"):
    args = [command, "--out", str(tmp_path / out)]
    if cfg_path is not None:
        args += ["--config", str(cfg_path)]
    return main(args + list(extra))


@pytest.mark.parametrize("text, value", [
    ("30ueV", 30e-6), ("30 µeV", 30e-6), ("-60 μeV", -60e-6), ("0.25 eV", 0.25),
    ("1.5meV", 1.5e-3), ("2e-3", 2e-3), (".5", 0.5), (7, 7.0),
])
def test_parse_energy(text, value):
    assert parse_energy(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("bad", ["30 kHz", "", "eV", "1e400", True, None, [1]])
def test_parse_energy_rejects(bad):
    with pytest.raises(ConfigError):
        parse_energy(bad)


@given(st.floats(-1e3, 1e3, allow_nan=False), st.sampled_from(["ueV", "meV", "eV"]))
def test_parse_energy_roundtrip(x, unit):
    scale = {"ueV": 1e-6, "meV": 1e-3, "eV": 1.0}[unit]
    assert parse_energy(f"{x!r}{unit}") == pytest.approx(x * scale, rel=1e-15, abs=1e-300)


def test_config_validation():
    base = {"n_atoms": 4, "collective_coupling": "30ueV"}
    assert build_config(base).n_atoms == 4
    for bad in ({**base, "colour": 1},
                {"n_atoms": 4},
                {**base, "coupling_g": 1e-6},
                {**base, "n_atoms": 2.5},
                {**base, "n_atoms": float("inf")},
                {**base, "hop_w": 0},
                {**base, "detunings": []},
                {**base, "time": {"t_max": -1}},
                {**base, "time": {"dt": 1}},
                {**base, "mode_window": [3, 9]},
                {**base, "geometry": "torus"},
                {**base, "two_photon_method": "rk4"},
                {**base, "three_level": {"mu": 0.1}}):
        with pytest.raises(ConfigError):
            build_config(bad)


def test_presets_load():
    for name in cli.PRESETS:
        cfg, _ = load_config(preset=name)
        assert cfg.time.times()[0] == 0.0
    cfg, _ = load_config(preset="fig1")
    assert cfg.n_atoms == 20000 and cfg.detunings == [-60e-6, 0.0, 30e-6]
    assert cfg.params(0.0).collective_coupling == pytest.approx(30e-6)
    with pytest.raises(ConfigError):
        load_config(preset="fig9")
    with pytest.raises(ConfigError):
        load_config()


def test_file_overrides_preset(tmp_path):
    path = write_config(tmp_path, n_atoms=500)
    cfg, _ = load_config(path, "fig1")
    assert cfg.n_atoms == 500 and cfg.hop_w == 0.25 and cfg.mode_window == (1, 99)


def test_golden_outputs_are_reproduced(tmp_path):
    for cmd in COMMANDS:
        assert run(tmp_path, cmd, FIXTURE / "config.json") == 0
    out = tmp_path / "out"
    expected = FIXTURE / "expected"
    names = sorted(p.name for p in expected.iterdir())
    assert sorted(p.name for p in out.iterdir()) == names
    for name in names:
        assert (out / name).read_bytes() == (expected / name).read_bytes(), name


def test_golden_outputs_match_dense_references():
    cfg, _ = load_config(FIXTURE / "config.json")
    check_outputs(FIXTURE / "expected", cfg)


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, n_atoms=30, collective_coupling="30ueV",
                       detunings=["0ueV", "-20ueV"], time={"t_max": 0.1, "n_points": 50,
                                                         "prefix_points": 0})
    for out in ("a", "b"):
        assert run(tmp_path, "dynamics", cfg, out=out) == 0
    a = (tmp_path / "a" / "populations.csv").read_bytes()
    assert a == (tmp_path / "b" / "populations.csv").read_bytes()


def test_sidecar_contents(tmp_path):
    cfg = write_config(tmp_path, n_atoms=3, collective_coupling="30ueV")
    assert run(tmp_path, "spectrum", cfg) == 0
    meta = json.loads((tmp_path / "out" / "quasienergies.csv.json").read_text())
    assert meta["command"] == "spectrum" and meta["preset"] is None
    assert meta["config"]["collective_coupling"] == pytest.approx(30e-6)
    assert meta["columns"][0] == "detuning_eV"
    assert "quasienergy" in meta["units"] and meta["hbar_eV_ns"] == 6.582119569e-7


def test_uncoupled_spectrum_single_row(tmp_path):
    cfg = write_config(tmp_path, n_atoms=7, coupling_g=0, detunings=["10ueV"])
    assert run(tmp_path, "spectrum", cfg) == 0
    rows = read_csv(tmp_path / "out" / "weights.csv")
    assert rows.size == 1
    assert float(rows["weight"]) == 1.0
    assert float(rows["quasienergy_eV"]) == pytest.approx(10e-6)


def test_weight_cutoff_flag(tmp_path):
    cfg = write_config(tmp_path, n_atoms=201, collective_coupling="30ueV")
    assert run(tmp_path, "spectrum", cfg, out="all") == 0
    assert run(tmp_path, "spectrum", cfg, "--weight-cutoff", "1e-6", out="cut") == 0
    full = read_csv(tmp_path / "all" / "weights.csv")
    cut = read_csv(tmp_path / "cut" / "weights.csv")
    assert len(cut) < len(full) and np.all(cut["weight"] > 1e-6)
    assert full["weight"].sum() == pytest.approx(1.0, abs=1e-10)


def test_dynamics_first_row_and_checksum(tmp_path):
    cfg = write_config(tmp_path, n_atoms=101, collective_coupling="30ueV",
                       time={"t_max": 0.3, "n_points": 301, "prefix_points": 0})
    assert run(tmp_path, "dynamics", cfg) == 0
    rows = read_csv(tmp_path / "out" / "populations.csv")
    assert rows["photon_pop"][0] == pytest.approx(1.0, abs=1e-12)
    assert rows["exciton_total"][0] == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(rows["checksum"])) < 1e-9


def test_twophoton_two_sites(tmp_path):
    cfg = write_config(tmp_path, n_atoms=2, hop_w="1meV", collective_coupling="0.3meV",
                       time={"t_max": 0.01, "n_points": 11, "prefix_points": 0})
    assert run(tmp_path, "twophoton", cfg) == 0
    spec = read_csv(tmp_path / "out" / "spectrum2.csv")
    assert len(spec) == 4 and set(spec["sector"]) == {"full"}
    assert spec["weight"].sum() == pytest.approx(1.0, abs=1e-12)
    pops = read_csv(tmp_path / "out" / "populations2.csv")
    assert np.max(np.abs(pops["checksum"])) < 1e-12


def test_threelevel_without_upper_coupling(tmp_path):
    cfg = write_config(tmp_path, three_level={"g": "30ueV", "mu": 0},
                       time={"t_max": 0.5, "n_points": 51, "prefix_points": 0})
    assert run(tmp_path, "threelevel", cfg) == 0
    rows = read_csv(tmp_path / "out" / "threelevel.csv")
    assert np.all(rows["analytic_c2"] == 0)
    assert np.max(rows["numeric_c2"]) < 1e-25


def test_threelevel_outside_closed_form_regime(tmp_path):
    cfg = write_config(tmp_path, three_level={"g": "30ueV", "mu": 0.01, "deltas": ["30ueV"]},
                       time={"t_max": 0.5, "n_points": 5, "prefix_points": 0})
    assert run(tmp_path, "threelevel", cfg) == 0
    rows = read_csv(tmp_path / "out" / "threelevel.csv")
    assert np.all(np.isnan(rows["analytic_c0"]))
    assert np.allclose(rows["numeric_c0"] + rows["numeric_c1"] + rows["numeric_c2"], 1.0)


def test_sweep_rows(tmp_path):
    cfg = write_config(tmp_path, n_atoms=101, collective_coupling="30ueV",
                       sweep={"start": "-60ueV", "stop": "60ueV", "count": 7})
    assert run(tmp_path, "sweep", cfg) == 0
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    assert len(rows) == 7
    assert np.all(np.diff(rows["lower_eV"]) > 0)


def test_exit_codes(tmp_path, capsys, monkeypatch):
    assert run(tmp_path, "spectrum", tmp_path / "missing.json") == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "spectrum", bad) == cli.EXIT_CONFIG
    unit = write_config(tmp_path, n_atoms=3, collective_coupling="30 furlongs")
    assert run(tmp_path, "spectrum", unit) == cli.EXIT_CONFIG
    big = write_config(tmp_path, n_atoms=200000, collective_coupling="30ueV")
    assert run(tmp_path, "spectrum", big) == cli.EXIT_CAPACITY
    wide = write_config(tmp_path, n_atoms=500, collective_coupling="30ueV")
    assert run(tmp_path, "twophoton", wide) == cli.EXIT_CAPACITY
    well = write_config(tmp_path, geometry="well", n_atoms=3, collective_coupling="30ueV")
    assert run(tmp_path, "twophoton", well) == cli.EXIT_CONFIG
    cfg = write_config(tmp_path, n_atoms=3, collective_coupling="30ueV")
    assert run(tmp_path, "spectrum", cfg, "--threads", "0") == cli.EXIT_CONFIG
    monkeypatch.setattr(cli, "CLOSURE_TOL", -1.0)
    assert run(tmp_path, "spectrum", cfg) == cli.EXIT_TOLERANCE
    err = capsys.readouterr().err
    assert "config error" in err and "capacity error" in err and "tolerance" in err


def test_twophoton_phase_budget(tmp_path):
    cfg = write_config(tmp_path, n_atoms=60, collective_coupling="30ueV",
                       two_photon_method="krylov", time={"t_max": 3.0, "n_points": 10,
                                                         "prefix_points": 0})
    assert run(tmp_path, "twophoton", cfg) == cli.EXIT_CAPACITY


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "fewphoton", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and res.stdout.strip()
