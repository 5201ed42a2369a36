"""Bundled parameter sets for the vanadyl porphyrin and copper bis-dithiolene qubits.

Each preset ships one configuration file per bath type, an expected-results
manifest and a hydrogen-density-matched surrogate structure.  The real
crystal structures are not bundled; point ``structure`` at them to run the
quantitative checks.
"""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..config import SimulationConfig, parse_config

PRESETS = ("votpp", "cumnt")
_BATH_FILES = {"nuclear-H": "h", "nuclear-D": "d", "electron": "e"}


class UnknownPresetError(KeyError):
    pass


def preset_path(filename: str) -> Path:
    path = resources.files(__name__).joinpath(filename)
    if not path.is_file():
        raise FileNotFoundError(f"no bundled preset file {filename!r}")
    return Path(str(path))


@dataclass(frozen=True)
class PresetBundle:
    name: str
    central: dict  # published Hamiltonian parameters, as strings
    configs: dict  # bath type -> SimulationConfig
    convergence: dict  # bath type -> {order, r_dipole, r_bath[, n_realizations]}
    expected: tuple  # manifest entries
    surrogate: dict

    def config(self, bath: str = "nuclear-H", **overrides) -> SimulationConfig:
        if bath not in self.configs:
            raise KeyError(f"preset {self.name} has no {bath} configuration")
        return self.configs[bath].replace(**overrides) if overrides else self.configs[bath]

    def expected_value(self, quantity: str, bath: str = None) -> dict:
        for entry in self.expected:
            if entry["quantity"] == quantity and entry.get("bath") == bath:
                return entry
        raise KeyError(f"no expected {quantity} for {bath}")

    @property
    def g_perp(self) -> float:
        return float(self.central["g_perp"])

    @property
    def g_par(self) -> float:
        return float(self.central["g_par"])

    @property
    def a_perp_mhz(self) -> float:
        return float(self.central["A_perp_mhz"])

    @property
    def a_par_mhz(self) -> float:
        return float(self.central["A_par_mhz"])

    @property
    def p_mhz(self) -> float:
        return float(self.central["p_mhz"])


def load_preset(name: str) -> PresetBundle:
    """Load the ``votpp`` or ``cumnt`` bundle."""
    if name not in PRESETS:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    manifest = json.loads(preset_path(f"{name}_expected.json").read_text())
    configs = {}
    for bath, suffix in _BATH_FILES.items():
        try:
            text = preset_path(f"{name}_{suffix}.cfg").read_text()
        except FileNotFoundError:
            continue
        configs[bath] = parse_config(text)
    return PresetBundle(
        name=name,
        central=manifest["central"],
        configs=configs,
        convergence=manifest["convergence"],
        expected=tuple(manifest["expected"]),
        surrogate=manifest["surrogate"],
    )
