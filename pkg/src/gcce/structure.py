"""Crystal structures, spin species and bath construction.

Structure files use a small extended-XYZ dialect::

    3
    Lattice="ax ay az bx by bz cx cy cz" qubit_index=0
    V  0.0 0.0 0.0
    H  1.2 0.0 0.4
    H  ...

Cartesian coordinates are in Angstrom.  ``qubit_index`` is the zero-based
index of the paramagnetic centre among the atom lines.

Species registry files hold one species per line::

    # name  s  gamma_rad_per_ms_G  quadrupole_MHz  abundance
    1H      0.5  26.7522  0  0.999885
"""

import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .constants import AVOGADRO, ELECTRON_GYRO, MHZ


class StructureParseError(ValueError):
    """Malformed structure or registry text; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownSpeciesError(KeyError):
    pass


@dataclass(frozen=True)
class SpinSpecies:
    """Physical identity of a spin.

    ``gamma`` is in rad/ms/G and ``quadrupole_p`` in rad/ms (the scalar
    ``p`` of an axial ``p I_z^2`` term).
    """

    name: str
    s: float
    gamma: float
    quadrupole_p: float = 0.0
    abundance: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError(f"abundance of {self.name} must lie in [0, 1]")
        if abs(self.s - 0.5) < 1e-12 and self.quadrupole_p != 0.0:
            raise ValueError(f"spin-1/2 species {self.name} cannot carry a quadrupole term")

    @property
    def dim(self) -> int:
        return int(round(2 * self.s + 1))


ELECTRON = SpinSpecies("e", 0.5, ELECTRON_GYRO, 0.0, 1.0)

# element label -> isotope used when a structure atom becomes a bath spin
DEFAULT_ISOTOPES = {"H": "1H", "D": "2H", "C": "13C", "N": "14N", "V": "51V", "Cu": "63Cu"}


class SpeciesRegistry(dict):
    """Mapping of species name to :class:`SpinSpecies`."""

    def __missing__(self, key):
        raise UnknownSpeciesError(f"unknown spin species {key!r}")

    def for_element(self, element: str) -> SpinSpecies:
        if element in self:
            return self[element]
        return self[DEFAULT_ISOTOPES.get(element, element)]


def parse_species_registry(text: str) -> SpeciesRegistry:
    registry = SpeciesRegistry()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise StructureParseError("expected 'name s gamma quadrupole_MHz abundance'", lineno)
        name = parts[0]
        try:
            s, gamma, quad, abundance = (float(x) for x in parts[1:])
        except ValueError as exc:
            raise StructureParseError(str(exc), lineno) from None
        registry[name] = SpinSpecies(name, s, gamma, quad * MHZ, abundance)
    return registry


def load_species_registry(path=None) -> SpeciesRegistry:
    """Read a registry file; ``None`` loads the bundled default registry."""
    if path is None:
        text = resources.files("gcce.presets").joinpath("species.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_species_registry(text)


@dataclass(frozen=True)
class UnitCell:
    """Periodic unit cell with atoms in fractional coordinates."""

    lattice_vectors: np.ndarray  # rows are a, b, c in Angstrom
    elements: tuple
    fractional: np.ndarray  # (n_atoms, 3), wrapped into [0, 1)
    qubit_site: int = 0

    @property
    def volume(self) -> float:
        return abs(float(np.linalg.det(self.lattice_vectors)))

    @property
    def cartesian(self) -> np.ndarray:
        return self.fractional @ self.lattice_vectors

    @property
    def atoms(self):
        return list(zip(self.elements, map(tuple, self.fractional)))

    @property
    def qubit_element(self) -> str:
        return self.elements[self.qubit_site]

    def count(self, element: str) -> int:
        return sum(1 for e in self.elements if e == element)


_LATTICE_RE = re.compile(r'Lattice\s*=\s*"([^"]*)"')
_QUBIT_RE = re.compile(r"qubit_index\s*=\s*(\d+)")


def parse_structure(text: str) -> UnitCell:
    """Parse the extended-XYZ structure format into a :class:`UnitCell`."""
    lines = text.splitlines()
    if not lines:
        raise StructureParseError("empty structure file", 1)
    try:
        n_atoms = int(lines[0].split()[0])
    except (ValueError, IndexError):
        raise StructureParseError("first line must hold the atom count", 1) from None
    if len(lines) < 2:
        raise StructureParseError("missing lattice header", 2)
    header = lines[1]
    match = _LATTICE_RE.search(header)
    if match is None:
        raise StructureParseError('missing Lattice="..." header', 2)
    try:
        lattice = np.array([float(x) for x in match.group(1).split()]).reshape(3, 3)
    except ValueError:
        raise StructureParseError("lattice must hold nine numbers", 2) from None
    if abs(np.linalg.det(lattice)) < 1e-9:
        raise StructureParseError("lattice vectors are linearly dependent", 2)
    qmatch = _QUBIT_RE.search(header)
    qubit = int(qmatch.group(1)) if qmatch else 0

    elements, coords = [], []
    for lineno in range(3, 3 + n_atoms):
        if lineno > len(lines):
            raise StructureParseError(f"expected {n_atoms} atoms, file ends early", lineno)
        parts = lines[lineno - 1].split()
        if len(parts) < 4:
            raise StructureParseError("expected 'Element x y z'", lineno)
        try:
            coords.append([float(x) for x in parts[1:4]])
        except ValueError:
            raise StructureParseError("non-numeric coordinate", lineno) from None
        elements.append(parts[0])
    if not 0 <= qubit < n_atoms:
        raise StructureParseError(f"qubit_index {qubit} outside atom list", 2)

    frac = np.linalg.solve(lattice.T, np.array(coords, dtype=float).T).T if n_atoms else np.zeros((0, 3))
    frac = np.mod(frac, 1.0)
    frac[np.isclose(frac, 1.0, rtol=0, atol=1e-12)] = 0.0
    return UnitCell(lattice, tuple(elements), frac, qubit)


def read_structure(path) -> UnitCell:
    return parse_structure(Path(path).read_text())


def format_structure(cell: UnitCell) -> str:
    lat = " ".join(f"{x:.10g}" for x in cell.lattice_vectors.ravel())
    rows = [str(len(cell.elements)), f'Lattice="{lat}" qubit_index={cell.qubit_site}']
    for element, xyz in zip(cell.elements, cell.cartesian):
        rows.append(f"{element} {xyz[0]:.8f} {xyz[1]:.8f} {xyz[2]:.8f}")
    return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class BathSpin:
    """One bath spin.  ``static_field`` (rad/ms, couples to the spin vector)
    carries fixed local fields such as a bound electron's own hyperfine
    shift; it adds to the Zeeman term."""

    position: tuple
    species: SpinSpecies
    static_field: tuple = None


@dataclass(frozen=True)
class BathRealization:
    spins: tuple
    seed: object = None
    concentration: float = 1.0


def _image_range(cell: UnitCell, radius: float) -> np.ndarray:
    lat = cell.lattice_vectors
    volume = cell.volume
    spans = []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        plane_spacing = volume / np.linalg.norm(np.cross(lat[j], lat[k]))
        spans.append(int(np.ceil(radius / plane_spacing)) + 1)
    grids = np.meshgrid(*(np.arange(-n, n + 1) for n in spans), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def sort_positions(positions: np.ndarray, center) -> np.ndarray:
    """Order indices by distance from ``center`` then by x, y, z.

    Values are rounded to 1e-9 Angstrom so ties are broken the same way
    regardless of the order atoms appeared in the input.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if positions.shape[0] == 0:
        return np.zeros(0, dtype=int)
    rounded = np.round(positions, 9)
    dist = np.round(np.linalg.norm(positions - np.asarray(center, dtype=float), axis=1), 9)
    return np.lexsort((rounded[:, 2], rounded[:, 1], rounded[:, 0], dist))


def periodic_sites(cell: UnitCell, elements, radius: float, center=None, exclude_center=True) -> np.ndarray:
    """Cartesian positions of all periodic images of ``elements`` within ``radius``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if center is None:
        center = cell.cartesian[cell.qubit_site]
    center = np.asarray(center, dtype=float)
    elements = set(elements)
    mask = np.array([e in elements for e in cell.elements], dtype=bool)
    if not mask.any():
        return np.zeros((0, 3))
    base = cell.fractional[mask]
    shifts = _image_range(cell, radius + np.linalg.norm(cell.lattice_vectors.sum(axis=0)))
    frac = (base[None, :, :] + shifts[:, None, :]).reshape(-1, 3)
    cart = frac @ cell.lattice_vectors
    dist = np.linalg.norm(cart - center, axis=1)
    keep = dist <= radius + 1e-9
    if exclude_center:
        keep &= dist > 1e-6
    cart = cart[keep]
    return cart[sort_positions(cart, center)]


def build_bath(cell: UnitCell, r_bath: float, species_filter, central_position=None, registry=None) -> list:
    """Collect periodic images of the selected elements as bath spins.

    Parameters
    ----------
    cell : UnitCell
    r_bath : float
        Bath radius in Angstrom around ``central_position``.
    species_filter : iterable of str
        Element labels to include (e.g. ``{"H"}``).
    central_position : array-like, optional
        Defaults to the Cartesian position of the qubit site.
    registry : SpeciesRegistry, optional
        Maps element labels to spin species; the bundled registry by default.

    Returns
    -------
    list of BathSpin
        Sorted by distance from the centre, then lexicographically by position.
    """
    if r_bath <= 0:
        raise ValueError("r_bath must be positive")
    registry = registry or load_species_registry()
    species_filter = set(species_filter)
    out = []
    for element in sorted(species_filter):
        if element not in cell.elements:
            continue
        species = registry.for_element(element)
        for pos in periodic_sites(cell, {element}, r_bath, central_position):
            out.append(BathSpin(tuple(float(x) for x in pos), species))
    if central_position is None:
        central_position = cell.cartesian[cell.qubit_site]
    order = sort_positions(np.array([b.position for b in out]), central_position)
    return [out[i] for i in order]


def substitute_isotope(bath, from_species, to_species, registry=None) -> list:
    """Swap the species of every spin matching ``from_species``.

    Species may be given as :class:`SpinSpecies` or as registry names.
    """
    registry = registry or load_species_registry()
    if isinstance(from_species, str):
        from_species = registry[from_species]
    if isinstance(to_species, str):
        to_species = registry[to_species]
    return [replace(b, species=to_species) if b.species.name == from_species.name else b for b in bath]


def qubit_sites(cell: UnitCell, r_bath: float, central_position=None) -> np.ndarray:
    """Candidate positions for bath electrons: images of the qubit element."""
    return periodic_sites(cell, {cell.qubit_element}, r_bath, central_position, exclude_center=True)


def sample_electron_bath(sites, f: float, seed, species: SpinSpecies = ELECTRON) -> BathRealization:
    """Occupy each candidate site independently with probability ``f``."""
    if not 0.0 <= f <= 1.0:
        raise ValueError("concentration must lie in [0, 1]")
    sites = np.asarray(sites, dtype=float).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    occupied = rng.random(sites.shape[0]) < f
    spins = tuple(BathSpin(tuple(float(x) for x in p), species) for p in sites[occupied])
    return BathRealization(spins, seed, f)


def concentration_to_molar(f: float, cell: UnitCell, qubits_per_cell: int) -> float:
    """Molar concentration (mM) of paramagnetic centres at fraction ``f``."""
    volume = cell.volume if isinstance(cell, UnitCell) else float(cell)
    if volume <= 0:
        raise ValueError("cell volume must be positive")
    litres = volume * 1e-27  # Angstrom^3 -> m^3 -> L
    return f * qubits_per_cell / (litres * AVOGADRO) * 1e3


def molar_to_concentration(mm: float, cell: UnitCell, qubits_per_cell: int) -> float:
    return mm / concentration_to_molar(1.0, cell, qubits_per_cell)
