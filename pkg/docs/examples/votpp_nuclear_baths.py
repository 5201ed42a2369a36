"""Hydrogen and deuterium bath T2 for the vanadyl porphyrin preset.

Uses the bundled surrogate lattice unless a structure file is passed as
the first argument.  Each bath takes one to a few minutes with a single
mean-field sample.
"""

import sys

from gcce.config import ensemble_coherence
from gcce.fitting import fit_stretched_exp
from gcce.presets import load_preset

preset = load_preset("votpp")
structure = sys.argv[1] if len(sys.argv) > 1 else None

fits = {}
for bath in ("nuclear-H", "nuclear-D"):
    cfg = preset.config(bath, n_meanfield_samples=1)
    if structure:
        cfg = cfg.replace(structure=structure)
    curve = ensemble_coherence(cfg, extend=True)
    fits[bath] = fit_stretched_exp(curve)
    expected = preset.expected_value("t2", bath)["value"]
    print(f"{bath}: T2 = {fits[bath].t2 * 1e3:.2f} us, beta = {fits[bath].beta:.2f} (published {expected} us)")

print(f"T2(D) / T2(H) = {fits['nuclear-D'].t2 / fits['nuclear-H'].t2:.1f}")
