"""Ideal pulse sequences: FID, Hahn echo and CPMG-n."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PulseSequence:
    """``kind`` is ``"fid"``, ``"hahn"`` or ``"cpmg"``; pulses rotate about ``axis``."""

    kind: str = "hahn"
    n_pulses: int = 1
    axis: str = "y"

    def __post_init__(self):
        kind = self.kind.lower()
        aliases = {"hahnecho": "hahn", "hahn_echo": "hahn", "echo": "hahn", "free": "fid"}
        kind = aliases.get(kind, kind)
        if kind not in ("fid", "hahn", "cpmg"):
            raise ValueError(f"unknown pulse sequence {self.kind!r}")
        n = int(self.n_pulses)
        if kind == "fid":
            n = 0
        elif kind == "hahn":
            n = 1
        elif n < 1:
            raise ValueError("CPMG needs at least one pulse")
        if self.axis not in ("x", "y"):
            raise ValueError("pulse axis must be 'x' or 'y'")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "n_pulses", n)

    @classmethod
    def fid(cls):
        return cls("fid", 0)

    @classmethod
    def hahn(cls, axis="y"):
        return cls("hahn", 1, axis)

    @classmethod
    def cpmg(cls, n, axis="y"):
        return cls("cpmg", n, axis)

    @property
    def label(self) -> str:
        return "fid" if self.kind == "fid" else f"cpmg{self.n_pulses}"

    def fractions(self) -> np.ndarray:
        """Free-evolution durations as fractions of the total time.

        Adjacent half-intervals of the CPMG train are merged, giving
        ``[1/2n, 1/n, ..., 1/n, 1/2n]`` with a pulse between each pair.
        """
        n = self.n_pulses
        if n == 0:
            return np.array([1.0])
        inner = np.full(n - 1, 1.0 / n)
        return np.concatenate([[0.5 / n], inner, [0.5 / n]])


def pulse_timings(seq: PulseSequence, t: float) -> list:
    """Expanded schedule for total time ``t``: floats are free-evolution
    segments, the string ``"pi"`` marks a refocusing pulse.

    CPMG-n is ``n`` repetitions of ``(tau, pi, tau)`` with ``tau = t / 2n``.
    """
    if t < 0:
        raise ValueError("total evolution time must be non-negative")
    if seq.n_pulses == 0:
        return [float(t)]
    tau = t / (2 * seq.n_pulses)
    out = []
    for _ in range(seq.n_pulses):
        out.extend([tau, "pi", tau])
    return out
