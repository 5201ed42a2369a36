import numpy as np
import pytest

from gcce.hamiltonian import CentralNucleus, CentralSystem
from gcce.constants import MHZ
from gcce.structure import BathSpin, load_species_registry


@pytest.fixture(scope="session")
def registry():
    return load_species_registry()


@pytest.fixture(scope="session")
def free_electron():
    return CentralSystem(field=np.array([0.0, 0.0, 3300.0]))


@pytest.fixture(scope="session")
def vanadyl(registry):
    nucleus = CentralNucleus(registry["51V"], np.diag([-473.0, -166.0, -166.0]) * MHZ, -0.35 * MHZ)
    return CentralSystem(
        g_tensor=np.diag([1.968, 1.984, 1.984]),
        field=np.array([0.0, 0.0, 3300.0]),
        own_nucleus=nucleus,
    )


def random_bath(rng, n, species, box=10.0, min_sep=1.0, exclude=1.5):
    """Spins uniformly in a cube of side ``box`` centred on the qubit."""
    spins = []
    while len(spins) < n:
        pos = (rng.random(3) - 0.5) * box
        if np.linalg.norm(pos) < exclude:
            continue
        if any(np.linalg.norm(pos - np.array(b.position)) < min_sep for b in spins):
            continue
        spins.append(BathSpin(tuple(pos), species))
    return spins
