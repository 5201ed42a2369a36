"""Rebuild the bundled surrogate unit cells.

The cells are deterministic: each preset has a fixed seed, volume and
hydrogen count.  Pass an output directory to write the ``.xyz`` files
there instead of only checking them against the bundled copies.
"""

import sys
from pathlib import Path

import numpy as np

from gcce.presets import preset_path
from gcce.presets.surrogate import generate_surrogate
from gcce.structure import format_structure, read_structure

out = Path(sys.argv[1]) if len(sys.argv) > 1 else None
for name in ("votpp", "cumnt"):
    cell = generate_surrogate(name)
    bundled = read_structure(preset_path(f"{name}_surrogate.xyz"))
    same = np.allclose(cell.cartesian, bundled.cartesian, atol=1e-7)
    print(f"{name}: {cell.count('H')} H in {cell.volume:.1f} A^3, matches bundled copy: {same}")
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}_surrogate.xyz").write_text(format_structure(cell))
