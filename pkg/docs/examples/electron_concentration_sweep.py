"""Electron-bath T2 against concentration and the nuclear crossover.

A reduced version of the full sweep: second order, 50 A bath, 10
realizations per point.  Takes roughly ten minutes on one core.
"""

from gcce.config import ensemble_coherence
from gcce.fitting import fit_loglog, fit_stretched_exp, solve_crossover
from gcce.presets import load_preset
from gcce.structure import concentration_to_molar, read_structure

preset = load_preset("votpp")
base = preset.config("electron", order=2, r_bath=50.0, r_dipole=100.0, n_realizations=10)

points = []
for f in (0.05, 0.1, 0.2, 0.4):
    curve = ensemble_coherence(base.replace(concentration=f), extend=True)
    fit = fit_stretched_exp(curve)
    points.append((f, fit.t2))
    print(f"f = {f:.0%}: T2 = {fit.t2 * 1e3:.3f} us, {len(curve.meta['divergent'])} divergent samples")

scan = fit_loglog(points)
print(f"log-log slope {scan.loglog_slope:.2f}")

cell = read_structure(base.resolve(base.structure))
for target_us in (10.88, 127.0):
    c = solve_crossover(scan, target_us * 1e-3)
    print(f"T2 = {target_us} us reached at {100 * c:.3g}% ({concentration_to_molar(c, cell, 2):.2g} mM)")
