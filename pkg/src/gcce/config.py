"""Simulation configuration files and ensemble-averaged coherence.

Configuration files are flat ``key = value`` text with ``#`` comments.
Lists are comma separated; tensors are given either as three diagonal
entries or as nine row-major entries.  :func:`format_config` writes every
field in a fixed order and :func:`parse_config` of that text reproduces the
configuration exactly.
"""

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import MHZ, US
from .engine import CoherenceCurve, MeanFieldSample, compute_coherence
from .clusters import DEFAULT_CLUSTER_CAP, build_connectivity, enumerate_clusters
from .hamiltonian import DEFAULT_DIM_CAP, BathModel, CentralNucleus, CentralSystem, Interactions
from .pulses import PulseSequence
from .structure import (
    ELECTRON,
    BathSpin,
    build_bath,
    load_species_registry,
    qubit_sites,
    read_structure,
    sample_electron_bath,
    substitute_isotope,
)

log = logging.getLogger(__name__)

BATH_TYPES = ("nuclear-H", "nuclear-D", "electron", "mixed")
NUCLEAR_T_MAX = 50 * US
ELECTRON_T_MAX_AT_2PCT = 2 * US
DIVERGENCE_TOLERANCE = 1e-6  # samples with |L| above 1 + this are discarded


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class EnsembleError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        detail = "; ".join(f"seed {seed}: {err}" for seed, err in failures)
        super().__init__(f"every bath realization failed ({detail})")


def _floats(n_allowed):
    def parse(text):
        values = tuple(float(x) for x in text.replace(",", " ").split())
        if len(values) not in n_allowed:
            raise ValueError(f"expected {' or '.join(map(str, n_allowed))} numbers")
        return values

    return parse


def _float_list(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _int_list(text):
    return tuple(int(x) for x in text.replace(",", " ").split())


def _str_list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _optional(parse):
    def inner(text):
        return None if text.strip().lower() in ("none", "") else parse(text)

    return inner


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _labels(text):
    # "-0.5 -0.5 ; 0.5 -0.5"
    parts = [p for p in text.split(";")]
    if len(parts) != 2:
        raise ValueError("expected two labels separated by ';'")
    return tuple(tuple(float(x) for x in p.replace(",", " ").split()) for p in parts)


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return " ; ".join(" ".join(_fmt(v) for v in lab) for lab in value)
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class SimulationConfig:
    """Every input of a run.  Times in ms, distances in Angstrom, field in G."""

    structure: str = None
    species_registry: str = None
    qubits_per_cell: int = 2
    g: tuple = (2.0023193, 2.0023193, 2.0023193)
    nucleus: str = None  # species name of the qubit's own nucleus
    hyperfine_mhz: tuple = (0.0, 0.0, 0.0)
    quadrupole_mhz: float = 0.0
    field_gauss: tuple = (0.0, 0.0, 3300.0)
    qubit_labels: tuple = None
    bath: str = "nuclear-H"
    r_bath: float = 20.0
    r_dipole: float = 8.0
    order: int = 2
    concentration: float = 1.0
    n_realizations: int = None
    n_meanfield_samples: int = None
    sequence: str = "hahn"
    n_pulses: int = 1
    pulse_axis: str = "y"
    t_max: float = None  # ms
    n_points: int = 101
    max_extensions: int = 4
    seed: int = 0
    bath_bath: bool = True
    secular: bool = False
    host_g: bool = False
    bound_electrons: bool = False  # bath electrons carry their own frozen metal nucleus
    dim_cap: int = DEFAULT_DIM_CAP
    cluster_cap: int = DEFAULT_CLUSTER_CAP
    workers: int = 1
    concentrations: tuple = ()
    t2_targets: tuple = ()  # ms
    pulses: tuple = ()
    verify_spins: int = 4
    verify_box: float = 10.0
    verify_species: str = "1H"
    curves: tuple = ()
    fit_x: tuple = ()
    fit_kind: str = "stretched"
    base_dir: str = None  # directory relative paths resolve against; not echoed

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)

    @property
    def is_electron(self) -> bool:
        return self.bath in ("electron", "mixed")

    @property
    def realizations(self) -> int:
        if self.n_realizations is not None:
            return self.n_realizations
        return 50 if self.is_electron else 1

    @property
    def meanfield_samples(self) -> int:
        if self.n_meanfield_samples is not None:
            return self.n_meanfield_samples
        return 1 if self.is_electron else 8

    @property
    def default_t_max(self) -> float:
        if self.t_max is not None:
            return self.t_max
        if self.is_electron and self.concentration > 0:
            return ELECTRON_T_MAX_AT_2PCT * 0.02 / self.concentration
        return NUCLEAR_T_MAX

    def times(self, t_max=None) -> np.ndarray:
        return np.linspace(0.0, self.default_t_max if t_max is None else t_max, self.n_points)

    def pulse_sequence(self, n_pulses=None) -> PulseSequence:
        if n_pulses is not None:
            return PulseSequence("cpmg", n_pulses, self.pulse_axis)
        return PulseSequence(self.sequence, self.n_pulses, self.pulse_axis)

    def resolve(self, path):
        if path is None:
            return None
        if str(path).startswith("preset:"):
            from .presets import preset_path

            return preset_path(str(path)[len("preset:"):])
        p = Path(path)
        if not p.is_absolute() and self.base_dir:
            p = Path(self.base_dir) / p
        return p


_PARSERS = {
    "structure": _optional(str.strip),
    "species_registry": _optional(str.strip),
    "qubits_per_cell": int,
    "g": _floats((3, 9)),
    "nucleus": _optional(str.strip),
    "hyperfine_mhz": _floats((3, 9)),
    "quadrupole_mhz": float,
    "field_gauss": _floats((3,)),
    "qubit_labels": _optional(_labels),
    "bath": str.strip,
    "r_bath": float,
    "r_dipole": float,
    "order": int,
    "concentration": float,
    "n_realizations": _optional(int),
    "n_meanfield_samples": _optional(int),
    "sequence": str.strip,
    "n_pulses": int,
    "pulse_axis": str.strip,
    "t_max": _optional(float),
    "n_points": int,
    "max_extensions": int,
    "seed": int,
    "bath_bath": _bool,
    "secular": _bool,
    "host_g": _bool,
    "bound_electrons": _bool,
    "dim_cap": int,
    "cluster_cap": int,
    "workers": int,
    "concentrations": _float_list,
    "t2_targets": _float_list,
    "pulses": _int_list,
    "verify_spins": int,
    "verify_box": float,
    "verify_species": str.strip,
    "curves": _str_list,
    "fit_x": _float_list,
    "fit_kind": str.strip,
}


def validate(cfg: SimulationConfig):
    def need(cond, field, message):
        if not cond:
            raise ConfigError(field, message)

    for name in ("r_bath", "r_dipole", "verify_box"):
        need(getattr(cfg, name) > 0, name, "must be positive")
    need(cfg.order >= 1, "order", "must be at least 1")
    need(0.0 <= cfg.concentration <= 1.0, "concentration", "must lie in [0, 1]")
    need(cfg.n_points >= 2, "n_points", "must be at least 2")
    need(cfg.bath in BATH_TYPES, "bath", f"must be one of {', '.join(BATH_TYPES)}")
    need(cfg.sequence.lower() in ("fid", "hahn", "cpmg"), "sequence", "must be fid, hahn or cpmg")
    need(cfg.pulse_axis in ("x", "y"), "pulse_axis", "must be x or y")
    need(cfg.n_pulses >= 1 or cfg.sequence.lower() != "cpmg", "n_pulses", "CPMG needs at least one pulse")
    need(cfg.t_max is None or cfg.t_max > 0, "t_max", "must be positive")
    need(cfg.n_realizations is None or cfg.n_realizations >= 1, "n_realizations", "must be at least 1")
    need(cfg.n_meanfield_samples is None or cfg.n_meanfield_samples >= 0, "n_meanfield_samples", "must be >= 0")
    need(cfg.qubits_per_cell >= 1, "qubits_per_cell", "must be at least 1")
    need(cfg.workers >= 1, "workers", "must be at least 1")
    need(cfg.max_extensions >= 0, "max_extensions", "must be >= 0")
    need(cfg.verify_spins >= 1, "verify_spins", "must be at least 1")
    need(all(0 < c <= 1 for c in cfg.concentrations), "concentrations", "must lie in (0, 1]")
    need(all(t > 0 for t in cfg.t2_targets), "t2_targets", "must be positive")
    need(all(n >= 1 for n in cfg.pulses), "pulses", "must be at least 1")
    need(cfg.fit_kind in ("stretched", "loglog", "powerlaw"), "fit_kind", "must be stretched, loglog or powerlaw")
    need(cfg.qubit_labels is None or len(cfg.qubit_labels) == 2, "qubit_labels", "need two labels")


def parse_config(text: str, base_dir=None) -> SimulationConfig:
    """Parse ``key = value`` text.  Unknown keys and bad values raise
    :class:`ConfigError` naming the key."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "given twice")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    try:
        return SimulationConfig(base_dir=None if base_dir is None else str(base_dir), **values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    return parse_config(text, base_dir=path.resolve().parent)


def format_config(cfg: SimulationConfig) -> str:
    """Echo every field, one per line, in declaration order."""
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name == "base_dir":
            continue
        value = getattr(cfg, f.name)
        if f.name == "structure" and value is not None and cfg.base_dir and not str(value).startswith("preset:"):
            value = str(cfg.resolve(value))
        lines.append(f"{f.name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def _tensor(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.diag(values) if values.size == 3 else values.reshape(3, 3)


def central_system(cfg: SimulationConfig, registry=None) -> CentralSystem:
    registry = registry or load_species_registry(cfg.resolve(cfg.species_registry))
    nucleus = None
    if cfg.nucleus is not None:
        nucleus = CentralNucleus(
            registry[cfg.nucleus], _tensor(cfg.hyperfine_mhz) * MHZ, cfg.quadrupole_mhz * MHZ
        )
    return CentralSystem(
        g_tensor=_tensor(cfg.g),
        field=np.asarray(cfg.field_gauss, dtype=float),
        own_nucleus=nucleus,
        qubit_labels=cfg.qubit_labels,
    )


def interactions(cfg: SimulationConfig, cs: CentralSystem) -> Interactions:
    return Interactions(cfg.bath_bath, cfg.secular, cs.g_tensor if cfg.host_g else None)


def _seed(cfg, *key):
    return np.random.SeedSequence(cfg.seed, spawn_key=tuple(key))


class BathFactory:
    """Builds the bath of realization ``r`` for a configuration."""

    def __init__(self, cfg: SimulationConfig, registry=None):
        self.cfg = cfg
        self.registry = registry or load_species_registry(cfg.resolve(cfg.species_registry))
        if cfg.structure is None:
            raise ConfigError("structure", "a structure file is required")
        try:
            self.cell = read_structure(cfg.resolve(cfg.structure))
        except OSError as exc:
            raise ConfigError("structure", str(exc)) from None
        self.nuclear = []
        if cfg.bath in ("nuclear-H", "nuclear-D", "mixed"):
            self.nuclear = build_bath(self.cell, cfg.r_bath, {"H"}, registry=self.registry)
            if cfg.bath == "nuclear-D":
                self.nuclear = substitute_isotope(self.nuclear, "1H", "2H", self.registry)
        self.sites = qubit_sites(self.cell, cfg.r_bath) if cfg.is_electron else np.zeros((0, 3))

    def realization(self, r: int) -> list:
        spins = list(self.nuclear)
        if self.cfg.is_electron:
            sample = sample_electron_bath(self.sites, self.cfg.concentration, _seed(self.cfg, r, 0), ELECTRON)
            electrons = list(sample.spins)
            if self.cfg.bound_electrons:
                electrons = self._bind(electrons, _seed(self.cfg, r, 0, 1))
            spins.extend(electrons)
        return spins

    def _bind(self, electrons, seed) -> list:
        """Give each bath electron the static hyperfine field of its own
        nucleus, frozen at a random projection along the field."""
        cfg = self.cfg
        if cfg.nucleus is None:
            raise ConfigError("bound_electrons", "needs the qubit nucleus to be set")
        species = self.registry[cfg.nucleus]
        hyperfine = _tensor(cfg.hyperfine_mhz) * MHZ
        field = np.asarray(cfg.field_gauss, dtype=float)
        b = field / np.linalg.norm(field) if np.linalg.norm(field) > 0 else np.array([0.0, 0.0, 1.0])
        rng = np.random.default_rng(seed)
        m = species.s - np.floor(rng.random(len(electrons)) * species.dim)
        return [
            BathSpin(e.position, e.species, tuple(float(x) for x in mi * (hyperfine @ b)))
            for e, mi in zip(electrons, m)
        ]


def _ensemble_once(cfg, cs, factory, seq, times, inter):
    total = np.zeros(len(times), dtype=complex)
    count = 0
    guarded = 0
    seeds = []
    failures = []
    divergent = []
    n_samples = cfg.meanfield_samples
    for r in range(cfg.realizations):
        try:
            spins = factory.realization(r)
            model = BathModel(cs, spins, inter)
            graph = build_connectivity(model.positions if len(model) else np.zeros((0, 3)), cfg.r_dipole)
            cset = enumerate_clusters(graph, cfg.order, cfg.cluster_cap)
            samples = [None] if n_samples == 0 else [
                MeanFieldSample.draw(model, _seed(cfg, r, s + 1)) for s in range(n_samples)
            ]
            for s, mf in enumerate(samples):
                values, stats = compute_coherence(cs, model, cset, seq, times, mf, inter, cfg.dim_cap, cfg.workers)
                guarded += stats.guarded_points
                peak = float(np.abs(values).max())
                if peak > 1 + DIVERGENCE_TOLERANCE:
                    # the truncated expansion broke down for this bath state
                    log.warning("realization %d sample %d diverged (max |L| = %.3g)", r, s, peak)
                    divergent.append([cfg.seed, r, s])
                    continue
                total += values
                count += 1
                seeds.append([cfg.seed, r, s])
        except (ValueError, RuntimeError, MemoryError) as exc:
            log.warning("realization %d failed: %s", r, exc)
            failures.append(([cfg.seed, r], str(exc)))
    if count == 0:
        raise EnsembleError(failures + [(key, "diverged") for key in divergent])
    info = {"seeds": seeds, "failures": failures, "divergent": divergent, "guarded_points": guarded}
    return total / count, info


def ensemble_coherence(cfg: SimulationConfig, seq: PulseSequence = None, t_max=None, extend=False) -> CoherenceCurve:
    """Mean coherence over bath realizations and mean-field samples.

    Realization ``r`` draws its occupations from ``SeedSequence(seed,
    spawn_key=(r, 0))`` and its mean-field sample ``s`` from ``(r, s + 1)``,
    so every curve is reproducible from the master seed alone.  Samples
    whose truncated expansion diverges (``|L|`` above one) are left out of
    the mean and listed under ``divergent``.  With
    ``extend`` the grid is doubled (up to ``max_extensions`` times) while
    ``|L|`` has not dropped below one half.
    """
    seq = seq or cfg.pulse_sequence()
    cs = central_system(cfg)
    inter = interactions(cfg, cs)
    factory = BathFactory(cfg)
    t_max = cfg.default_t_max if t_max is None else t_max
    for attempt in range(cfg.max_extensions + 1):
        times = cfg.times(t_max)
        values, info = _ensemble_once(cfg, cs, factory, seq, times, inter)
        if not extend or np.abs(values).min() < 0.5 or attempt == cfg.max_extensions:
            break
        t_max *= 2
    meta = {
        "order": cfg.order,
        "r_bath": cfg.r_bath,
        "r_dipole": cfg.r_dipole,
        "bath": cfg.bath,
        "concentration": cfg.concentration,
        "sequence": seq.label,
        "field_gauss": list(cfg.field_gauss),
        "n_realizations": cfg.realizations,
        "n_meanfield_samples": cfg.meanfield_samples,
        "t_max": t_max,
        **info,
    }
    return CoherenceCurve(times, values, meta)
