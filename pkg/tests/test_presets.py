import numpy as np
import pytest

from gcce.config import central_system, format_config, parse_config
from gcce.constants import MHZ
from gcce.presets import PRESETS, UnknownPresetError, load_preset, preset_path


def test_votpp_central_parameters():
    p = load_preset("votpp")
    assert p.central["g_perp"] == "1.984" and p.central["g_par"] == "1.968"
    assert p.central["A_perp_mhz"] == "-166" and p.central["A_par_mhz"] == "-473"
    assert p.central["p_mhz"] == "-0.35" and p.central["nuclear_spin"] == "7/2"
    assert p.central["field_tesla"] == "0.33"
    assert p.a_par_mhz == -473.0


def test_cumnt_central_parameters():
    p = load_preset("cumnt")
    assert (p.central["g_perp"], p.central["g_par"]) == ("2.0227", "2.0925")
    assert (p.central["A_perp_mhz"], p.central["A_par_mhz"]) == ("118", "500")
    assert p.central["p_mhz"] == "9.45" and p.central["nuclear_spin"] == "3/2"
    assert p.p_mhz == 9.45


def test_convergence_settings():
    vo, cu = load_preset("votpp").convergence, load_preset("cumnt").convergence
    assert vo["electron"] == {"order": 3, "r_dipole": 40.0, "r_bath": 90.0, "n_realizations": 50}
    assert vo["nuclear-H"] == {"order": 2, "r_dipole": 8.0, "r_bath": 20.0}
    assert vo["nuclear-D"] == {"order": 2, "r_dipole": 6.0, "r_bath": 20.0}
    assert cu["nuclear-H"] == {"order": 2, "r_dipole": 8.0, "r_bath": 25.0}
    assert cu["nuclear-D"] == {"order": 2, "r_dipole": 8.0, "r_bath": 20.0}


@pytest.mark.parametrize("name", PRESETS)
def test_configs_agree_with_manifest(name):
    p = load_preset(name)
    for bath, conv in p.convergence.items():
        cfg = p.config(bath)
        assert cfg.bath == bath
        assert (cfg.order, cfg.r_dipole, cfg.r_bath) == (conv["order"], conv["r_dipole"], conv["r_bath"])
        if "n_realizations" in conv:
            assert cfg.realizations == conv["n_realizations"]
        # every shipped config survives a format/parse round trip
        assert parse_config(format_config(cfg)) == cfg.replace(base_dir=None)
        cs = central_system(cfg)
        g = sorted(np.diag(cs.g_tensor))
        assert g == sorted([p.g_par, p.g_perp, p.g_perp])
        hf = np.sort(np.diag(cs.own_nucleus.hyperfine)) / MHZ
        assert np.allclose(hf, np.sort([p.a_par_mhz, p.a_perp_mhz, p.a_perp_mhz]))
        assert cs.own_nucleus.quadrupole_p / MHZ == pytest.approx(p.p_mhz)
        assert np.linalg.norm(cs.field) == pytest.approx(3300.0)


@pytest.mark.parametrize(
    "name,quantity,bath,value",
    [
        ("votpp", "t2", "nuclear-H", "10.88"),
        ("votpp", "beta", "nuclear-H", "2.2"),
        ("votpp", "t2", "nuclear-D", "127"),
        ("votpp", "beta", "nuclear-D", "1.69"),
        ("votpp", "t2_experiment", None, "1"),
        ("cumnt", "t2", "nuclear-H", "8.6"),
        ("cumnt", "t2", "nuclear-D", "100"),
        ("cumnt", "t2_experiment", None, "9.23"),
        ("cumnt", "t2_cpmg2048", "nuclear-H", "10.66"),
        ("cumnt", "p", "nuclear-H", "0.97"),
    ],
)
def test_manifest_values_are_verbatim_strings(name, quantity, bath, value):
    entry = load_preset(name).expected_value(quantity, bath)
    assert entry["value"] == value
    assert isinstance(entry["value"], str)


@pytest.mark.parametrize("name", PRESETS)
def test_every_expected_value_has_provenance(name):
    for entry in load_preset(name).expected:
        assert entry["source"] and entry["provenance"]
        assert isinstance(entry["value"], str)
    assert load_preset(name).surrogate["placeholder"] is True


def test_unknown_preset_and_files():
    with pytest.raises(UnknownPresetError):
        load_preset("nv-center")
    with pytest.raises(FileNotFoundError):
        preset_path("nothing.xyz")
    with pytest.raises(KeyError):
        load_preset("cumnt").config("mixed")
    with pytest.raises(KeyError):
        load_preset("votpp").expected_value("t2", "mixed")
