"""Coherence-time extraction and scaling fits.

``fit_stretched_exp`` fits ``|L(t)| = exp(-(t/T2)^beta)``.  Concentration
scans and CPMG scans are straight lines in log-log space and use ordinary
least squares.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import linregress

BETA_MAX = 4.0
DECAY_THRESHOLD = 0.9
WINDOW_FACTOR = 10.0  # fitted T2 beyond this multiple of t_max is rejected
START_BETAS = (1.0, 2.0, 3.0)


class FitError(ValueError):
    pass


class InsufficientDecayError(FitError):
    """The curve never dropped below the decay threshold; extend ``t_max``."""


class NoCrossoverError(FitError):
    pass


@dataclass(frozen=True)
class StretchedExpFit:
    t2: float  # ms
    beta: float
    residual: float  # RMS of |L| - model
    t2_err: float = float("nan")
    beta_err: float = float("nan")

    def model(self, times) -> np.ndarray:
        return np.exp(-((np.asarray(times, dtype=float) / self.t2) ** self.beta))

    def as_dict(self) -> dict:
        return {
            "t2_ms": self.t2,
            "beta": self.beta,
            "residual": self.residual,
            "t2_err_ms": self.t2_err,
            "beta_err": self.beta_err,
        }


def _one_over_e_time(t, y):
    below = np.nonzero(y < np.exp(-1.0))[0]
    if below.size == 0:
        return None
    i = below[0]
    if i == 0:
        return t[0] if t[0] > 0 else None
    # linear interpolation between the bracketing points
    y0, y1 = y[i - 1], y[i]
    return t[i - 1] + (y0 - np.exp(-1.0)) / (y0 - y1) * (t[i] - t[i - 1])


def fit_stretched_exp(curve, times=None) -> StretchedExpFit:
    """Least-squares fit of the modulus of a coherence curve.

    ``curve`` is a :class:`~gcce.engine.CoherenceCurve` or an array of
    values (then ``times`` is required).  Starts from ``beta`` in 1, 2, 3
    with ``T2`` from the ``1/e`` crossing and keeps the lowest residual.
    """
    if times is None:
        t, values = curve.times, curve.values
    else:
        t, values = np.asarray(times, dtype=float), curve
    t = np.asarray(t, dtype=float)
    y = np.abs(np.asarray(values))
    if t.shape != y.shape or t.ndim != 1:
        raise FitError("times and values must be 1-D arrays of equal length")
    if len(t) < 8:
        raise FitError("need at least 8 points to fit")
    if not np.all(np.isfinite(y)):
        raise FitError("curve contains non-finite values")
    if y.min() >= DECAY_THRESHOLD:
        raise InsufficientDecayError(
            f"|L| stays above {DECAY_THRESHOLD} up to t = {t.max():g} ms; extend t_max"
        )
    mask = t > 0
    tf, yf = t[mask], y[mask]
    t_e = _one_over_e_time(tf, yf)

    def residuals(x):
        with np.errstate(over="ignore"):
            return np.exp(-np.exp(x[1] * (np.log(tf) - x[0]))) - yf

    best = None
    for beta0 in START_BETAS:
        if t_e is None:
            k = int(np.argmin(yf))
            t2_0 = tf[k] * (-np.log(max(yf[k], 1e-300))) ** (-1.0 / beta0)
        else:
            t2_0 = t_e
        try:
            sol = least_squares(residuals, [np.log(t2_0), beta0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except (ValueError, FloatingPointError):
            continue
        if not np.all(np.isfinite(sol.x)) or not 0 < sol.x[1] <= BETA_MAX:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise FitError("no start converged to a valid stretched exponential")
    log_t2, beta = best.x
    if log_t2 > np.log(WINDOW_FACTOR * t.max()):
        # modulation dips without a real decay; the fit is extrapolating
        raise InsufficientDecayError(
            f"fitted T2 lies beyond {WINDOW_FACTOR:g} x t_max = {t.max():g} ms; extend t_max"
        )
    r = best.fun
    rms = float(np.sqrt(np.mean(np.concatenate([r, y[~mask] - 1.0]) ** 2)))
    t2 = float(np.exp(log_t2))
    errs = _standard_errors(best.jac, r)
    return StretchedExpFit(t2, float(beta), rms, t2 * errs[0], errs[1])


def _standard_errors(jac, r):
    dof = max(len(r) - 2, 1)
    s2 = float(r @ r) / dof
    try:
        cov = np.linalg.inv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        return (float("nan"), float("nan"))
    return tuple(float(np.sqrt(max(v, 0.0))) for v in np.diag(cov))


@dataclass(frozen=True)
class ConcentrationScan:
    """Straight line ``log10 T2 = slope * log10 c + intercept``."""

    points: tuple  # ((concentration fraction, T2 ms), ...)
    loglog_slope: float
    loglog_intercept: float

    def t2_at(self, concentration) -> np.ndarray:
        c = np.asarray(concentration, dtype=float)
        return 10.0 ** (self.loglog_slope * np.log10(c) + self.loglog_intercept)

    def as_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.points],
            "loglog_slope": self.loglog_slope,
            "loglog_intercept": self.loglog_intercept,
        }


def _validate_points(points, label):
    pts = np.asarray([(float(a), float(b)) for a, b in points], dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise FitError(f"need at least 3 {label} points")
    if np.any(pts <= 0):
        raise FitError(f"{label} points must be positive")
    if len(np.unique(pts[:, 0])) != len(pts):
        raise FitError(f"duplicate {label} values")
    return pts


def fit_loglog(points) -> ConcentrationScan:
    """OLS fit of ``log10 T2`` against ``log10 c`` for ``(c, T2)`` pairs."""
    pts = _validate_points(points, "concentration")
    fit = linregress(np.log10(pts[:, 0]), np.log10(pts[:, 1]))
    return ConcentrationScan(tuple(map(tuple, pts.tolist())), float(fit.slope), float(fit.intercept))


def solve_crossover(scan: ConcentrationScan, t2_target: float) -> float:
    """Concentration at which the fitted line reaches ``t2_target``."""
    if t2_target <= 0:
        raise FitError("target T2 must be positive")
    if scan.loglog_slope == 0:
        raise NoCrossoverError("T2 does not depend on concentration; no crossover")
    return float(10.0 ** ((np.log10(t2_target) - scan.loglog_intercept) / scan.loglog_slope))


@dataclass(frozen=True)
class PowerLawFit:
    """``T2(n) = t2_0 * n**p``."""

    t2_0: float  # ms
    p: float
    points: tuple = ()

    def t2_at(self, n) -> np.ndarray:
        return self.t2_0 * np.asarray(n, dtype=float) ** self.p

    def as_dict(self) -> dict:
        return {"t2_0_ms": self.t2_0, "p": self.p, "points": [list(x) for x in self.points]}


def fit_power_law(points) -> PowerLawFit:
    """OLS fit of ``ln T2`` against ``ln n`` for ``(n_pulses, T2)`` pairs."""
    pts = _validate_points(points, "pulse-count")
    if np.any(pts[:, 0] < 1):
        raise FitError("pulse counts must be at least 1")
    fit = linregress(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return PowerLawFit(float(np.exp(fit.intercept)), float(fit.slope), tuple(map(tuple, pts.tolist())))
