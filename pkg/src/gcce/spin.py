"""Dense spin operator algebra for small Hilbert spaces.

All matrices are complex128 numpy arrays in units of hbar = 1.  Basis
states of a single spin are ordered by descending projection
``m = s, s-1, ..., -s``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HERMITIAN_ATOL = 1e-12


class InvalidSpinError(ValueError):
    """Raised when a spin quantum number is not a positive half-integer."""


class ShapeError(ValueError):
    """Raised when operator dimensions do not match the target space."""


class NotHermitianError(ValueError):
    """Raised when a matrix expected to be Hermitian is not."""


@dataclass(frozen=True)
class SpinOperators:
    """Cartesian spin matrices for a single spin ``s``."""

    s: float
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    @property
    def splus(self) -> np.ndarray:
        return self.sx + 1j * self.sy

    @property
    def sminus(self) -> np.ndarray:
        return self.sx - 1j * self.sy

    @property
    def vector(self) -> np.ndarray:
        """Stacked ``(3, d, d)`` array ``[sx, sy, sz]``."""
        return np.stack([self.sx, self.sy, self.sz])

    @property
    def m_values(self) -> np.ndarray:
        return self.s - np.arange(self.dim)


def _check_spin(s) -> float:
    twice = 2 * float(s)
    if twice <= 0 or abs(twice - round(twice)) > 1e-9:
        raise InvalidSpinError(f"spin quantum number must be a positive half-integer, got {s!r}")
    return round(twice) / 2


@lru_cache(maxsize=None)
def _spin_operators(s: float) -> SpinOperators:
    dim = int(round(2 * s + 1))
    m = s - np.arange(dim)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1)); row index of m+1 is one above m
    ladder = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    splus = np.diag(ladder, k=1).astype(complex)
    sminus = splus.conj().T
    sx = (splus + sminus) / 2
    sy = (splus - sminus) / 2j
    sz = np.diag(m).astype(complex)
    for mat in (sx, sy, sz):
        mat.setflags(write=False)
    return SpinOperators(s=s, sx=sx, sy=sy, sz=sz)


def spin_operators(s) -> SpinOperators:
    """Return the spin matrices for spin quantum number ``s``.

    Parameters
    ----------
    s : float
        Spin quantum number; ``2 * s`` must be a positive integer.

    Raises
    ------
    InvalidSpinError
        If ``s`` is not a positive half-integer.
    """
    return _spin_operators(_check_spin(s))


def spin_dim(s) -> int:
    return int(round(2 * _check_spin(s) + 1))


def embed(op, site: int, dims) -> np.ndarray:
    """Embed a single-site operator into a tensor-product space.

    The result acts as ``op`` on factor ``site`` and as the identity on
    every other factor, with factors ordered as in ``dims``.
    """
    op = np.asarray(op)
    dims = [int(d) for d in dims]
    if not 0 <= site < len(dims):
        raise ShapeError(f"site {site} out of range for {len(dims)} factors")
    if op.shape != (dims[site], dims[site]):
        raise ShapeError(f"operator of shape {op.shape} does not match factor dimension {dims[site]}")
    left = int(np.prod(dims[:site], dtype=int))
    right = int(np.prod(dims[site + 1:], dtype=int))
    out = np.kron(np.eye(left), op)
    return np.kron(out, np.eye(right)).astype(complex)


def is_hermitian(h, atol: float = HERMITIAN_ATOL) -> bool:
    h = np.asarray(h)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        return False
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    return bool(np.allclose(h, np.swapaxes(h, -1, -2).conj(), rtol=0, atol=atol * scale))


def check_hermitian(h, atol: float = 1e-10) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h, atol=atol):
        raise NotHermitianError("matrix is not Hermitian within tolerance")
    return h


def expm_hermitian(h, t) -> np.ndarray:
    """Propagator ``exp(-i h t)`` via Hermitian eigendecomposition.

    ``h`` is in rad/ms and ``t`` in ms.  ``t`` may be a scalar or a
    1-D array of times, in which case a stack of propagators is returned.
    """
    h = check_hermitian(h)
    evals, evecs = np.linalg.eigh(h)
    return propagator_from_eig(evals, evecs, t)


def propagator_from_eig(evals, evecs, t) -> np.ndarray:
    """Reassemble ``V exp(-i lambda t) V^dagger`` from an eigendecomposition."""
    t = np.asarray(t, dtype=float)
    phases = np.exp(-1j * np.multiply.outer(t, evals))
    return (evecs * phases[..., None, :]) @ evecs.conj().T
