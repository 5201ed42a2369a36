"""Command-line front end.

``gcce simulate|sweep|cpmg|verify|fit --config FILE --out DIR [--seed N] [--workers K]``

Every command writes coherence curves as CSV and a ``summary.json``.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 verification failure.
"""

import argparse
import json
import logging
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .clusters import EnumerationOverflowError
from .config import (
    BathFactory,
    ConfigError,
    EnsembleError,
    central_system,
    ensemble_coherence,
    format_config,
    interactions,
    load_config,
)
from .engine import CoherenceCurve, gcce_coherence
from .exact import exact_coherence
from .fitting import FitError, fit_loglog, fit_power_law, fit_stretched_exp, solve_crossover
from .hamiltonian import ClusterTooLargeError, LevelIdentificationError, SingularityError
from .structure import BathSpin, concentration_to_molar, load_species_registry

log = logging.getLogger("gcce")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4
CSV_HEADER = "time_ms,coh_re,coh_im,coh_abs"
VERIFY_TOLERANCE = 1e-8
NUMERICAL_ERRORS = (
    FitError,
    EnsembleError,
    ClusterTooLargeError,
    EnumerationOverflowError,
    LevelIdentificationError,
    SingularityError,
    np.linalg.LinAlgError,
)


class VerificationFailure(RuntimeError):
    pass


def version() -> str:
    try:
        return metadata.version("gcce")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_curve_csv(path, curve: CoherenceCurve):
    rows = [CSV_HEADER]
    for t, v in zip(curve.times, curve.values):
        rows.append(f"{t:.17g},{v.real:.17g},{v.imag:.17g},{abs(v):.17g}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def read_curve_csv(path) -> CoherenceCurve:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ConfigError("curves", f"{path}: expected header {CSV_HEADER!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return CoherenceCurve(data[:, 0], data[:, 1] + 1j * data[:, 2])


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def write_summary(out: Path, record: dict):
    with open(out / "summary.json", "w", newline="\n") as fh:
        json.dump(record, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _fit_or_error(curve):
    try:
        return fit_stretched_exp(curve).as_dict(), None
    except FitError as exc:
        return None, str(exc)


def _curve_meta(curve):
    keep = ("seeds", "failures", "divergent", "guarded_points", "t_max", "n_realizations", "n_meanfield_samples", "sequence")
    return {k: curve.meta[k] for k in keep if k in curve.meta}


def cmd_simulate(cfg, out: Path) -> dict:
    curve = ensemble_coherence(cfg, extend=True)
    write_curve_csv(out / "curve.csv", curve)
    fit, error = _fit_or_error(curve)
    return {"curve": "curve.csv", "fit": fit, "fit_error": error, **_curve_meta(curve)}


def _molar(cfg, fraction):
    try:
        cell = BathFactory(cfg).cell
    except ConfigError:
        return None
    return concentration_to_molar(fraction, cell, cfg.qubits_per_cell)


def cmd_sweep(cfg, out: Path) -> dict:
    if len(cfg.concentrations) < 3:
        raise ConfigError("concentrations", "a sweep needs at least 3 concentrations")
    points, records = [], []
    for f in cfg.concentrations:
        name = f"curve_c{f:.6g}.csv"
        entry = {"concentration": f, "curve": name}
        try:
            curve = ensemble_coherence(cfg.replace(concentration=f), extend=True)
            write_curve_csv(out / name, curve)
            fit = fit_stretched_exp(curve)
            entry.update(fit=fit.as_dict(), **_curve_meta(curve))
            points.append((f, fit.t2))
        except NUMERICAL_ERRORS as exc:
            entry["error"] = str(exc)
            log.warning("sweep point %g failed: %s", f, exc)
        records.append(entry)
    if len(points) < 3:
        raise FitError(f"only {len(points)} sweep points succeeded; need 3")
    scan = fit_loglog(points)
    crossovers = []
    for target in cfg.t2_targets:
        c = solve_crossover(scan, target)
        crossovers.append({"t2_target_ms": target, "concentration": c, "molar_mm": _molar(cfg, c)})
    return {"points": records, "scan": scan.as_dict(), "crossovers": crossovers}


def cmd_cpmg(cfg, out: Path) -> dict:
    pulses = cfg.pulses or (cfg.n_pulses,)
    points, records = [], []
    for n in pulses:
        name = f"curve_n{n}.csv"
        entry = {"n_pulses": n, "curve": name}
        try:
            seq = cfg.pulse_sequence(n_pulses=n)
            curve = ensemble_coherence(cfg, seq=seq, t_max=cfg.default_t_max * np.sqrt(n), extend=True)
            write_curve_csv(out / name, curve)
            fit = fit_stretched_exp(curve)
            entry.update(fit=fit.as_dict(), **_curve_meta(curve))
            points.append((n, fit.t2))
        except NUMERICAL_ERRORS as exc:
            entry["error"] = str(exc)
            log.warning("CPMG n=%d failed: %s", n, exc)
        records.append(entry)
    result = {"points": records}
    if len(points) >= 3:
        result["power_law"] = fit_power_law(points).as_dict()
    elif len(pulses) >= 3:
        raise FitError(f"only {len(points)} CPMG points succeeded; need 3")
    return result


def synthetic_bath(cfg, registry=None):
    """Random spins in a cube of side ``verify_box`` around the qubit."""
    registry = registry or load_species_registry(cfg.resolve(cfg.species_registry))
    species = registry[cfg.verify_species]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    spins = []
    while len(spins) < cfg.verify_spins:
        pos = (rng.random(3) - 0.5) * cfg.verify_box
        if np.linalg.norm(pos) < 1.0 or any(np.linalg.norm(pos - np.array(b.position)) < 1.0 for b in spins):
            continue
        spins.append(BathSpin(tuple(float(x) for x in pos), species))
    return spins


def cmd_verify(cfg, out: Path) -> dict:
    cs = central_system(cfg)
    inter = interactions(cfg, cs)
    spins = synthetic_bath(cfg)
    seq = cfg.pulse_sequence()
    times = cfg.times()
    exact = exact_coherence(cs, spins, seq, times, inter, cfg.dim_cap)
    write_curve_csv(out / "exact.csv", exact)
    r_all = cfg.verify_box * np.sqrt(3) + 1.0  # every pair connected
    deviations = {}
    for order in range(1, len(spins) + 1):
        curve = gcce_coherence(cs, spins, order, r_all, seq, times, interactions=inter, dim_cap=cfg.dim_cap)
        write_curve_csv(out / f"cce_order{order}.csv", curve)
        deviations[order] = float(np.abs(curve.values - exact.values).max())
    full = deviations[len(spins)]
    report = {
        "n_spins": len(spins),
        "positions": [list(b.position) for b in spins],
        "species": cfg.verify_species,
        "max_deviation": {str(k): v for k, v in deviations.items()},
        "full_order_deviation": full,
        "tolerance": VERIFY_TOLERANCE,
        "passed": full <= VERIFY_TOLERANCE,
    }
    if not report["passed"]:
        raise VerificationFailure(report)
    return report


def cmd_fit(cfg, out: Path) -> dict:
    if not cfg.curves:
        raise ConfigError("curves", "no curve files given")
    fits = []
    for path in cfg.curves:
        curve = read_curve_csv(cfg.resolve(path))
        fits.append(fit_stretched_exp(curve))
    result = {"fits": [dict(curve=str(p), **f.as_dict()) for p, f in zip(cfg.curves, fits)]}
    if cfg.fit_kind == "stretched":
        return result
    if len(cfg.fit_x) != len(fits):
        raise ConfigError("fit_x", "need one value per curve")
    points = [(x, f.t2) for x, f in zip(cfg.fit_x, fits)]
    if cfg.fit_kind == "loglog":
        scan = fit_loglog(points)
        result["scan"] = scan.as_dict()
        result["crossovers"] = [
            {"t2_target_ms": t, "concentration": solve_crossover(scan, t)} for t in cfg.t2_targets
        ]
    else:
        result["power_law"] = fit_power_law(points).as_dict()
    return result


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "cpmg": cmd_cpmg, "verify": cmd_verify, "fit": cmd_fit}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcce", description="Cluster-correlation expansion of spin-qubit decoherence")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="key = value configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--workers", type=int, help="worker threads for cluster evaluation")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        cfg = cfg.replace(**overrides) if overrides else cfg
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record = {"command": args.command, "config": format_config(cfg), "seed": cfg.seed, "version": version()}
    code = EXIT_OK
    try:
        record["result"] = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationFailure as exc:
        record["result"] = exc.args[0]
        print("verification failed: full-order deviation above tolerance", file=sys.stderr)
        code = EXIT_VERIFY
    except NUMERICAL_ERRORS as exc:
        record["error"] = str(exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    record["wall_time_s"] = time.perf_counter() - start
    write_summary(out, record)
    return code


if __name__ == "__main__":
    sys.exit(main())
