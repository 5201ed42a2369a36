import json
import subprocess
import sys

import numpy as np
import pytest

from gcce.cli import CSV_HEADER, main, read_curve_csv, write_curve_csv
from gcce.config import (
    BathFactory,
    ConfigError,
    SimulationConfig,
    central_system,
    ensemble_coherence,
    format_config,
    load_config,
    parse_config,
)
from gcce.engine import CoherenceCurve

SMALL = """
structure = preset:votpp_surrogate.xyz
bath = nuclear-H
g = 1.968, 1.984, 1.984
nucleus = 51V
hyperfine_mhz = -473, -166, -166
quadrupole_mhz = -0.35
qubit_labels = -0.5 -0.5 ; 0.5 -0.5
r_bath = 9
r_dipole = 5
order = 2
n_meanfield_samples = 1
t_max = 0.03
n_points = 16
max_extensions = 0
seed = 5
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_round_trip_is_exact():
    cfg = parse_config(SMALL + "concentrations = 0.05, 0.1, 0.2\nt2_targets = 0.1\npulses = 1, 2, 4\nhost_g = true\n")
    text = format_config(cfg)
    assert parse_config(text) == cfg
    assert format_config(parse_config(text)) == text
    assert cfg.qubit_labels == ((-0.5, -0.5), (0.5, -0.5))
    assert cfg.pulses == (1, 2, 4)


def test_defaults_follow_bath_type():
    nuc = SimulationConfig()
    ele = SimulationConfig(bath="electron", concentration=0.04)
    assert nuc.realizations == 1 and nuc.meanfield_samples == 8
    assert ele.realizations == 50 and ele.meanfield_samples == 1
    assert ele.default_t_max == pytest.approx(1e-3)
    assert nuc.default_t_max == pytest.approx(0.05)
    assert len(nuc.times()) == 101


@pytest.mark.parametrize(
    "text,field",
    [
        ("colour = red", "colour"),
        ("order = two", "order"),
        ("order = 0", "order"),
        ("r_dipole = -1", "r_dipole"),
        ("bath = muon", "bath"),
        ("concentration = 1.5", "concentration"),
        ("g = 1, 2", "g"),
        ("seed = 1\nseed = 2", "seed"),
        ("just words", "line 1"),
        ("host_g = maybe", "host_g"),
        ("qubit_labels = 0.5", "qubit_labels"),
        ("pulse_axis = z", "pulse_axis"),
    ],
)
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field


def test_relative_paths_resolve_against_file(tmp_path):
    (tmp_path / "cell.xyz").write_text('1\nLattice="9 0 0 0 9 0 0 0 9"\nV 0 0 0\n')
    cfg = load_config(write(tmp_path, "structure = cell.xyz\n"))
    assert BathFactory(cfg).cell.volume == pytest.approx(729.0)
    assert str(tmp_path) in format_config(cfg)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
    with pytest.raises(ConfigError):
        BathFactory(SimulationConfig())


def test_central_system_from_config():
    cs = central_system(parse_config(SMALL))
    assert cs.dims == (2, 8)
    assert np.allclose(np.diag(cs.g_tensor), [1.968, 1.984, 1.984])


def test_ensemble_is_seed_reproducible():
    cfg = parse_config(SMALL)
    a = ensemble_coherence(cfg)
    b = ensemble_coherence(cfg)
    assert np.array_equal(a.values, b.values)
    assert a.meta["seeds"] == [[5, 0, 0]]
    assert a.meta["divergent"] == [] and a.meta["failures"] == []
    other = ensemble_coherence(cfg.replace(seed=6))
    assert not np.array_equal(a.values, other.values)


def test_electron_ensemble_meta():
    cfg = parse_config(SMALL).replace(bath="electron", concentration=0.3, r_bath=25.0, r_dipole=15.0, n_realizations=3)
    curve = ensemble_coherence(cfg)
    used = len(curve.meta["seeds"]) + len(curve.meta["divergent"])
    assert used == 3
    assert np.all(curve.abs <= 1 + 1e-6)


def test_csv_round_trip(tmp_path):
    curve = CoherenceCurve([0.0, 0.5, 1.0], [1.0, 0.3 + 0.1j, -0.2j])
    path = tmp_path / "c.csv"
    write_curve_csv(path, curve)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "0,1,0,1"
    again = read_curve_csv(path)
    assert np.array_equal(again.values, curve.values)
    path.write_text("t,x\n0,1\n")
    with pytest.raises(ConfigError):
        read_curve_csv(path)


def test_cli_simulate_and_fit(tmp_path):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 9 and summary["command"] == "simulate"
    assert "seed = 9" in summary["config"]
    curve = read_curve_csv(out / "curve.csv")
    assert len(curve) == 16
    assert summary["result"]["fit"]["t2_ms"] > 0 and summary["result"]["fit_error"] is None
    # 1 us is too short to decay: the curve is written and the fit failure reported
    short = write(tmp_path, SMALL.replace("t_max = 0.03", "t_max = 0.001"), "short.cfg")
    assert main(["simulate", "--config", str(short), "--out", str(tmp_path / "short")]) == 0
    record = json.loads((tmp_path / "short" / "summary.json").read_text())["result"]
    assert record["fit"] is None and "t_max" in record["fit_error"]

    rng_t = np.linspace(0, 0.05, 30)
    for i, t2 in enumerate((0.01, 0.02, 0.04)):
        write_curve_csv(tmp_path / f"c{i}.csv", CoherenceCurve(rng_t, np.exp(-(rng_t / t2) ** 2)))
    fit_cfg = write(tmp_path, "curves = c0.csv, c1.csv, c2.csv\nfit_x = 1, 2, 4\nfit_kind = powerlaw\n", "fit.cfg")
    assert main(["fit", "--config", str(fit_cfg), "--out", str(tmp_path / "fit")]) == 0
    result = json.loads((tmp_path / "fit" / "summary.json").read_text())["result"]
    assert result["power_law"]["p"] == pytest.approx(1.0)


def test_cli_exit_codes(tmp_path):
    bad = write(tmp_path, "order = banana\n", "bad.cfg")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    nofile = write(tmp_path, "bath = nuclear-H\n", "nofile.cfg")
    assert main(["simulate", "--config", str(nofile), "--out", str(tmp_path / "y")]) == 2
    few = write(tmp_path, SMALL + "concentrations = 0.1\n", "few.cfg")
    assert main(["sweep", "--config", str(few), "--out", str(tmp_path / "z")]) == 2
    # a cap of one cluster cannot hold the enumeration
    cap = write(tmp_path, SMALL + "cluster_cap = 1\n", "cap.cfg")
    assert main(["simulate", "--config", str(cap), "--out", str(tmp_path / "w")]) == 3
    with pytest.raises(SystemExit):
        main(["simulate"])


def test_cli_verify(tmp_path):
    cfg = write(tmp_path, "verify_spins = 3\nverify_box = 8\nt_max = 0.1\nn_points = 11\nseed = 3\n")
    out = tmp_path / "verify"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "summary.json").read_text())["result"]
    assert report["passed"] and report["full_order_deviation"] < 1e-8
    assert set(report["max_deviation"]) == {"1", "2", "3"}
    assert (out / "exact.csv").exists() and (out / "cce_order3.csv").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "gcce", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify" in res.stdout


def test_bound_electrons_carry_static_hyperfine_field():
    cfg = parse_config(SMALL).replace(bath="electron", concentration=0.5, r_bath=30.0, n_realizations=1)
    free = BathFactory(cfg).realization(0)
    bound = BathFactory(cfg.replace(bound_electrons=True)).realization(0)
    assert [b.position for b in free] == [b.position for b in bound]
    assert all(b.static_field is None for b in free)
    # field along z and hyperfine diagonal: the shift is A_zz m_I along z
    shifts = np.array([b.static_field for b in bound])
    assert np.allclose(shifts[:, :2], 0)
    m = shifts[:, 2] / (-166.0 * 2 * np.pi * 1e3)
    assert set(np.round(m, 9)) <= {-3.5, -2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 3.5}
    assert len(set(np.round(m, 9))) > 3
    again = BathFactory(cfg.replace(bound_electrons=True)).realization(0)
    assert again == bound
    with pytest.raises(ConfigError):
        BathFactory(cfg.replace(bound_electrons=True, nucleus=None)).realization(0)
