"""Hydrogen-density-matched surrogate crystals.

The real structures are not shipped.  These cells reproduce the unit-cell
volume, the number of qubits per cell and the number of hydrogens per cell
of each crystal, with hydrogens grouped the way aryl rings group them:
five H on a circle of radius 2.48 Angstrom at 60 degree spacing.  The
vanadyl porphyrin also carries pyrrole H pairs 2.7 Angstrom apart.
"""

import numpy as np

from ..structure import UnitCell

RING_RADIUS = 2.48  # C-C 1.40 + C-H 1.08
PAIR_SPACING = 2.7
MIN_HH = 1.8
SPECS = {
    # volume from the quoted concentration/molarity pairs, two qubits per cell
    "votpp": {"volume": 1487.7, "qubit": "V", "rings": 8, "pairs": 8, "min_qubit_h": 4.0, "seed": 20240601},
    "cumnt": {"volume": 2214.0, "qubit": "Cu", "rings": 16, "pairs": 0, "min_qubit_h": 4.0, "seed": 20240602},
}


def _random_frame(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    return q


def _fragment(rng, kind):
    frame = _random_frame(rng)
    if kind == "ring":
        angles = np.deg2rad(60.0 * np.arange(5))
        local = np.stack([RING_RADIUS * np.cos(angles), RING_RADIUS * np.sin(angles), np.zeros(5)], axis=1)
    else:
        local = np.array([[-PAIR_SPACING / 2, 0, 0], [PAIR_SPACING / 2, 0, 0]])
    return local @ frame.T


def _min_image_dist(a, b, lattice):
    inv = np.linalg.inv(lattice)
    d = (a[:, None, :] - b[None, :, :]) @ inv
    d -= np.round(d)
    return np.linalg.norm(d @ lattice, axis=-1)


def generate_surrogate(name: str, max_tries: int = 200000) -> UnitCell:
    """Build the surrogate cell for ``name`` deterministically."""
    spec = SPECS[name]
    a = spec["volume"] ** (1 / 3)
    lattice = np.eye(3) * a
    qubits = np.array([[0.0, 0.0, 0.0], [a / 2, a / 2, a / 2]])
    rng = np.random.default_rng(spec["seed"])
    placed = np.zeros((0, 3))
    kinds = ["ring"] * spec["rings"] + ["pair"] * spec["pairs"]
    tries = 0
    for kind in kinds:
        while True:
            tries += 1
            if tries > max_tries:
                raise RuntimeError("could not pack surrogate fragments")
            center = rng.random(3) @ lattice
            atoms = center + _fragment(rng, kind)
            if _min_image_dist(atoms, qubits, lattice).min() < spec["min_qubit_h"]:
                continue
            if len(placed) and _min_image_dist(atoms, placed, lattice).min() < MIN_HH:
                continue
            placed = np.vstack([placed, atoms])
            break
    cart = np.vstack([qubits, placed])
    frac = np.mod(cart @ np.linalg.inv(lattice), 1.0)
    elements = (spec["qubit"],) * 2 + ("H",) * len(placed)
    return UnitCell(lattice, elements, frac, 0)
