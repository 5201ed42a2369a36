"""Central-spin and cluster Hamiltonians.

Every Hamiltonian is a dense complex matrix in rad/ms.  The central space
is the electron spin, optionally tensored with the metal's own nucleus
(electron first).  Bath spins follow in cluster order.

Bath couplings, central-bath and bath-bath alike, are point dipoles::

    T_ab = -k gamma_1 gamma_2 (3 n_a n_b - delta_ab) / r^3

with ``k = mu0 hbar / 4 pi`` in internal units.  The central hyperfine
tensor to the metal's own nucleus is taken verbatim from the parameters.
"""

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from itertools import combinations

import numpy as np

from .constants import BOHR_GYRO, DIPOLAR_PREFACTOR
from .spin import check_hermitian, embed, spin_operators
from .structure import BathSpin, SpinSpecies

DEFAULT_DIM_CAP = 4096


class SingularityError(ValueError):
    """Two dipoles placed at the same point."""


class LevelIdentificationError(ValueError):
    """Qubit levels cannot be matched unambiguously to product states."""


class ClusterTooLargeError(ValueError):
    """Cluster Hilbert space exceeds the configured dimension cap."""


def dipole_tensor(r1, r2, gamma1, gamma2) -> np.ndarray:
    """Point-dipole coupling tensor between two spins (rad/ms).

    Positions in Angstrom, gyromagnetic ratios in rad/ms/G.  The energy of
    the pair is ``I1 . T . I2``.
    """
    sep = np.asarray(r2, dtype=float) - np.asarray(r1, dtype=float)
    r = np.linalg.norm(sep)
    if r < 1e-9:
        raise SingularityError("dipoles at coincident positions")
    n = sep / r
    pref = DIPOLAR_PREFACTOR * gamma1 * gamma2 / r**3
    return -pref * (3 * np.outer(n, n) - np.eye(3))


def dipole_tensors(positions1, positions2, gamma1, gamma2) -> np.ndarray:
    """Vectorized :func:`dipole_tensor` over leading axes."""
    sep = np.asarray(positions2, dtype=float) - np.asarray(positions1, dtype=float)
    r = np.linalg.norm(sep, axis=-1)
    if np.any(r < 1e-9):
        raise SingularityError("dipoles at coincident positions")
    n = sep / r[..., None]
    pref = DIPOLAR_PREFACTOR * np.asarray(gamma1) * np.asarray(gamma2) / r**3
    outer = 3 * n[..., :, None] * n[..., None, :] - np.eye(3)
    return -pref[..., None, None] * outer


@dataclass(frozen=True, eq=False)
class CentralNucleus:
    """The paramagnetic ion's own nucleus and its couplings to the electron."""

    species: SpinSpecies
    hyperfine: np.ndarray  # 3x3, rad/ms
    quadrupole_p: float = 0.0  # rad/ms


@dataclass(frozen=True, eq=False)
class CentralSystem:
    """Qubit electron, optionally hybridized with its own nucleus.

    ``qubit_labels`` names the two product states ``(m_s, m_I)`` (or
    ``(m_s,)`` without a nucleus) the qubit eigenstates are matched to;
    ``qubit_levels`` overrides the matching with explicit eigen-indices.
    """

    g_tensor: np.ndarray = dc_field(default_factory=lambda: 2.0023193 * np.eye(3))
    field: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    own_nucleus: CentralNucleus = None
    zfs_tensor: np.ndarray = dc_field(default_factory=lambda: np.zeros((3, 3)))
    spin: float = 0.5
    position: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    qubit_labels: tuple = None  # default: m_s = -1/2 -> +1/2 at the lowest |m_I|
    qubit_levels: tuple = None

    def __post_init__(self):
        for name, shape in (("g_tensor", (3, 3)), ("zfs_tensor", (3, 3)), ("field", (3,)), ("position", (3,))):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
            object.__setattr__(self, name, value)
        zfs = self.zfs_tensor
        if not np.allclose(zfs, zfs.T) or abs(np.trace(zfs)) > 1e-9 * max(1.0, np.abs(zfs).max()):
            raise ValueError("zero-field splitting tensor must be traceless and symmetric")
        if self.qubit_levels is not None:
            a, b = self.qubit_levels
            if a == b or not (0 <= a < self.dim and 0 <= b < self.dim):
                raise ValueError("qubit_levels must be two distinct indices of the central space")

    @property
    def dims(self) -> tuple:
        electron = int(round(2 * self.spin + 1))
        if self.own_nucleus is None:
            return (electron,)
        return (electron, self.own_nucleus.species.dim)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def g_iso(self) -> float:
        return float(np.trace(self.g_tensor)) / 3

    @property
    def gamma_iso(self) -> float:
        """Isotropic electron gyromagnetic ratio used in dipolar couplings."""
        return -self.g_iso * BOHR_GYRO

    @cached_property
    def s_ops(self) -> np.ndarray:
        """Electron spin operators on the central space, shape ``(3, D, D)``."""
        ops = spin_operators(self.spin).vector
        return np.stack([embed(o, 0, self.dims) for o in ops])

    @cached_property
    def i_ops(self) -> np.ndarray:
        if self.own_nucleus is None:
            return np.zeros((3, self.dim, self.dim), dtype=complex)
        ops = spin_operators(self.own_nucleus.species.s).vector
        return np.stack([embed(o, 1, self.dims) for o in ops])

    @cached_property
    def hamiltonian(self) -> np.ndarray:
        return build_central_hamiltonian(self)

    @cached_property
    def eigensystem(self):
        return np.linalg.eigh(self.hamiltonian)

    @cached_property
    def levels(self) -> tuple:
        if self.qubit_levels is not None:
            return tuple(self.qubit_levels)
        return select_qubit_levels(self.hamiltonian, self, self.qubit_labels or self.default_labels())

    @cached_property
    def qubit_vectors(self) -> np.ndarray:
        """Columns are the two selected qubit eigenstates."""
        evecs = self.eigensystem[1]
        return evecs[:, list(self.levels)]

    def default_labels(self) -> tuple:
        low = -0.5 if self.spin % 1 else 0.0
        if self.own_nucleus is None:
            return ((low,), (low + 1,))
        s_n = self.own_nucleus.species.s
        m_i = -0.5 if s_n % 1 else 0.0
        return ((low, m_i), (low + 1, m_i))

    def field_direction(self) -> np.ndarray:
        norm = np.linalg.norm(self.field)
        return self.field / norm if norm > 0 else np.array([0.0, 0.0, 1.0])


def _bilinear(ops1, tensor, ops2) -> np.ndarray:
    """``sum_ab T_ab A_a B_b`` for operator stacks ``A``, ``B`` of shape (3, D, D)."""
    right = np.tensordot(np.asarray(tensor), ops2, axes=(1, 0))
    return np.matmul(ops1, right).sum(axis=0)


def build_central_hamiltonian(cs: CentralSystem) -> np.ndarray:
    """Hybrid electron-nucleus Hamiltonian in rad/ms.

    ``mu_B B.g.S + S.D.S + S.A.I + gamma_N B.I + p I_z^2``
    """
    s = cs.s_ops
    h = BOHR_GYRO * np.einsum("a,ab,bxy->xy", cs.field, cs.g_tensor, s)
    if cs.spin > 0.5:
        h = h + _bilinear(s, cs.zfs_tensor, s)
    nuc = cs.own_nucleus
    if nuc is not None:
        i = cs.i_ops
        h = h + _bilinear(s, np.asarray(nuc.hyperfine, dtype=float), i)
        h = h + nuc.species.gamma * np.einsum("a,axy->xy", cs.field, i)
        h = h + nuc.quadrupole_p * (i[2] @ i[2])
    return check_hermitian(h + 0j)


def _label_index(label, dims) -> int:
    label = tuple(label)
    if len(label) != len(dims):
        raise LevelIdentificationError(f"label {label} does not match central factors {dims}")
    index = 0
    for m, d in zip(label, dims):
        s = (d - 1) / 2
        k = s - m
        if abs(k - round(k)) > 1e-9 or not 0 <= round(k) < d:
            raise LevelIdentificationError(f"projection {m} invalid for spin {s}")
        index = index * d + int(round(k))
    return index


def select_qubit_levels(h, cs: CentralSystem, target, degeneracy_tol: float = 1e-9) -> tuple:
    """Indices of the eigenstates of ``h`` best matching the ``target`` labels.

    Each selected eigenvector must have overlap above 0.5 with its product
    state, the two must be distinct, and neither may be degenerate.
    """
    evals, evecs = np.linalg.eigh(np.asarray(h))
    scale = max(1.0, float(np.max(np.abs(evals)))) if evals.size else 1.0
    chosen = []
    for label in target:
        weights = np.abs(evecs[_label_index(label, cs.dims), :]) ** 2
        k = int(np.argmax(weights))
        if weights[k] <= 0.5:
            raise LevelIdentificationError(f"no eigenstate has overlap > 0.5 with {label}")
        gaps = np.abs(np.delete(evals, k) - evals[k])
        if gaps.size and gaps.min() < degeneracy_tol * scale:
            raise LevelIdentificationError(f"eigenstate matching {label} is degenerate")
        chosen.append(k)
    if chosen[0] == chosen[1]:
        raise LevelIdentificationError("both labels map to the same eigenstate")
    return tuple(chosen)


@dataclass(frozen=True)
class Interactions:
    """Switches on the coupling model used for bath spins."""

    bath_bath: bool = True
    secular: bool = False  # keep only the S_z I_z part of central-bath tensors
    host_g: np.ndarray = None  # g-tensor for bath electrons; None = free electron


class BathModel:
    """Array form of a bath: per-spin data and central-bath couplings.

    Instances are immutable after construction and shared read-only
    between worker threads.
    """

    def __init__(self, cs: CentralSystem, spins, interactions: Interactions = Interactions()):
        spins = list(spins)
        self.cs = cs
        self.spins = spins
        self.interactions = interactions
        n = len(spins)
        self.positions = np.array([b.position for b in spins], dtype=float).reshape(n, 3)
        self.s = np.array([b.species.s for b in spins], dtype=float)
        self.dims = np.array([b.species.dim for b in spins], dtype=int)
        self.gamma = np.array([b.species.gamma for b in spins], dtype=float)
        self.quad = np.array([b.species.quadrupole_p for b in spins], dtype=float)
        self.names = [b.species.name for b in spins]
        self.zeeman = -self.gamma[:, None] * cs.field[None, :]
        if interactions.host_g is not None:
            electron = self.gamma < 0
            self.zeeman[electron] = BOHR_GYRO * (cs.field @ np.asarray(interactions.host_g, dtype=float))
        for i, b in enumerate(spins):
            if b.static_field is not None:
                self.zeeman[i] += np.asarray(b.static_field, dtype=float)
        if n:
            hf = dipole_tensors(cs.position, self.positions, cs.gamma_iso, self.gamma)
        else:
            hf = np.zeros((0, 3, 3))
        if interactions.secular:
            sec = np.zeros_like(hf)
            sec[:, 2, 2] = hf[:, 2, 2]
            hf = sec
        self.hyperfine = hf
        self.direction = cs.field_direction()

    def __len__(self):
        return len(self.spins)

    def pair_tensors(self, i, j) -> np.ndarray:
        i, j = np.asarray(i), np.asarray(j)
        if not self.interactions.bath_bath:
            return np.zeros(i.shape + (3, 3))
        return dipole_tensors(self.positions[i], self.positions[j], self.gamma[i], self.gamma[j])

    def draw_polarizations(self, rng) -> np.ndarray:
        """Random ``m`` eigenvalues, one per spin (infinite temperature)."""
        k = np.floor(rng.random(len(self)) * self.dims).astype(int)
        return self.s - k

    def meanfield_totals(self, m, chunk: int = 256):
        """Mean fields from every bath spin with projections ``m``.

        Returns ``(h_central, h_bath)``: the vector coupling to ``S`` and,
        for each spin ``i``, the vector coupling to ``I_i`` summed over all
        ``a != i``.  ``m`` may be ``(N,)`` or ``(n_samples, N)``.
        """
        m = np.asarray(m, dtype=float)
        single = m.ndim == 1
        m = np.atleast_2d(m)
        pol = m[..., None] * self.direction  # (S, N, 3)
        h_c = np.einsum("nab,snb->sa", self.hyperfine, pol)
        n = len(self)
        h_b = np.zeros((m.shape[0], n, 3))
        if self.interactions.bath_bath and n > 1:
            b = self.direction
            for start in range(0, n, chunk):
                stop = min(n, start + chunk)
                sep = self.positions[None, :, :] - self.positions[start:stop, None, :]
                r = np.linalg.norm(sep, axis=-1)
                self_mask = r < 1e-9
                r[self_mask] = 1.0
                unit = sep / r[..., None]
                pref = DIPOLAR_PREFACTOR * self.gamma[start:stop, None] * self.gamma[None, :] / r**3
                pref[self_mask] = 0.0
                # J_ia . b = -pref (3 n (n.b) - b)
                jb = -pref[..., None] * (3 * unit * (unit @ b)[..., None] - b)
                h_b[:, start:stop, :] = np.einsum("iac,sa->sic", jb, m)
        if single:
            return h_c[0], h_b[0]
        return h_c, h_b


class OperatorBasis:
    """Embedded operators for one cluster signature (central dims + bath dims).

    For small spaces the full operators are kept flattened to ``(count, D*D)``
    so coupling coefficients of a whole batch contract in one matrix product.
    Large spaces are assembled cluster by cluster from Kronecker products of
    central and bath-space factors.
    """

    DENSE_LIMIT = 4_000_000  # complex entries kept in flattened form

    def __init__(self, cs: CentralSystem, bath_dims):
        self.bath_dims = tuple(int(d) for d in bath_dims)
        self.k = len(self.bath_dims)
        self.dc = cs.dim
        self.dbath = int(np.prod(self.bath_dims, dtype=int))
        self.dim = self.dc * self.dbath
        self.pairs = list(combinations(range(self.k), 2))
        self.central_h = cs.hamiltonian
        self.central_s = cs.s_ops
        db = self.dbath
        bi = [
            np.stack([embed(o, idx, self.bath_dims) for o in spin_operators((d - 1) / 2).vector])
            for idx, d in enumerate(self.bath_dims)
        ]
        self.bi = np.array(bi).reshape(self.k, 3, db, db) if self.k else np.zeros((0, 3, db, db))
        self.bi_z2 = self.bi[:, 2] @ self.bi[:, 2]
        if self.pairs:
            self.bpair = np.array(
                [np.einsum("axy,byz->abxz", self.bi[p], self.bi[q]) for p, q in self.pairs]
            ).reshape(len(self.pairs), 9, db, db)
        else:
            self.bpair = np.zeros((0, 9, db, db))
        D = self.dim
        self.dense = D * D * (9 * (self.k + len(self.pairs)) + 4 * self.k + 4) <= self.DENSE_LIMIT
        if self.dense:
            eye_c, eye_b = np.eye(self.dc), np.eye(db)
            self.central = np.kron(self.central_h, eye_b).reshape(D * D)
            self.s = np.stack([np.kron(o, eye_b) for o in self.central_s]).reshape(3, D * D)
            self.i = np.array(
                [[np.kron(eye_c, o) for o in ops] for ops in self.bi], dtype=complex
            ).reshape(self.k, 3, D * D)
            self.iz2 = np.array([np.kron(eye_c, o) for o in self.bi_z2], dtype=complex).reshape(self.k, D * D)
            self.si = np.array(
                [[np.kron(sa, ib) for sa in self.central_s for ib in ops] for ops in self.bi], dtype=complex
            ).reshape(self.k, 9, D * D)
            self.ii = np.array(
                [[np.kron(eye_c, o) for o in prod] for prod in self.bpair], dtype=complex
            ).reshape(len(self.pairs), 9, D * D)

    def assemble(self, hyperfine, local_field, quad, pair_tensors, central_field) -> np.ndarray:
        """Batch of cluster Hamiltonians.

        Parameters
        ----------
        hyperfine : (n, k, 3, 3) central-bath tensors
        local_field : (n, k, 3) vector coupling to each I_i (Zeeman + mean field)
        quad : (n, k) axial quadrupole scalars
        pair_tensors : (n, n_pairs, 3, 3) bath-bath tensors
        central_field : (n, 3) mean-field vector coupling to S
        """
        n = central_field.shape[0]
        D = self.dim
        if not self.dense:
            return np.stack(
                [
                    self._assemble_one(hyperfine[c], local_field[c], quad[c], pair_tensors[c], central_field[c])
                    for c in range(n)
                ]
            ) if n else np.zeros((0, D, D), dtype=complex)
        flat = np.broadcast_to(self.central, (n, D * D)).copy()
        flat += central_field @ self.s
        for i in range(self.k):
            flat += hyperfine[:, i].reshape(n, 9) @ self.si[i]
            flat += local_field[:, i] @ self.i[i]
            flat += quad[:, i, None] * self.iz2[i][None, :]
        for p in range(len(self.pairs)):
            flat += pair_tensors[:, p].reshape(n, 9) @ self.ii[p]
        return flat.reshape(n, D, D)

    def _assemble_one(self, hyperfine, local_field, quad, pair_tensors, central_field):
        eye_c, eye_b = np.eye(self.dc), np.eye(self.dbath)
        central = self.central_h + np.einsum("a,axy->xy", central_field, self.central_s)
        h = np.kron(central, eye_b)
        bath_only = np.zeros((self.dbath, self.dbath), dtype=complex)
        for i in range(self.k):
            for b in range(3):
                h += np.kron(np.einsum("a,axy->xy", hyperfine[i][:, b], self.central_s), self.bi[i, b])
            bath_only += np.einsum("a,axy->xy", local_field[i], self.bi[i]) + quad[i] * self.bi_z2[i]
        for p in range(len(self.pairs)):
            bath_only += np.einsum("a,axy->xy", pair_tensors[p].reshape(9), self.bpair[p])
        return h + np.kron(eye_c, bath_only)


def operator_basis(cs: CentralSystem, bath_dims) -> OperatorBasis:
    cache = cs.__dict__.setdefault("_operator_bases", {})
    key = tuple(int(d) for d in bath_dims)
    if key not in cache:
        cache[key] = OperatorBasis(cs, key)
    return cache[key]


def build_cluster_hamiltonian(
    cs: CentralSystem,
    spins,
    mean_field=(),
    interactions: Interactions = Interactions(),
    dim_cap: int = DEFAULT_DIM_CAP,
) -> np.ndarray:
    """Explicit Hamiltonian of the central system plus a bath cluster.

    Parameters
    ----------
    cs : CentralSystem
    spins : sequence of BathSpin
        Spins treated quantum mechanically.
    mean_field : sequence of (BathSpin, m)
        Spins frozen at projection ``m`` along the field; they enter only as
        static fields on the central electron and on the cluster spins.
    interactions : Interactions
    dim_cap : int
        Largest Hilbert-space dimension allowed.
    """
    spins = list(spins)
    mean_field = list(mean_field)
    cluster_positions = {tuple(b.position) for b in spins}
    if any(tuple(b.position) in cluster_positions for b, _ in mean_field):
        raise ValueError("cluster spins and mean-field spins must be disjoint")
    dims = [b.species.dim for b in spins]
    dim = cs.dim * int(np.prod(dims, dtype=int))
    if dim > dim_cap:
        raise ClusterTooLargeError(f"cluster dimension {dim} exceeds cap {dim_cap}")
    factors = list(cs.dims) + dims
    nc = len(cs.dims)

    def central_op(op):
        # op acts on the central space; extend by bath identities
        return np.kron(op, np.eye(dim // cs.dim))

    bath_ops = [
        np.stack([embed(o, nc + i, factors) for o in spin_operators(b.species.s).vector])
        for i, b in enumerate(spins)
    ]
    s_ops = np.stack([central_op(o) for o in cs.s_ops])
    h = central_op(cs.hamiltonian)
    model = BathModel(cs, spins + [b for b, _ in mean_field], interactions)
    direction = cs.field_direction()
    for i, ops in enumerate(bath_ops):
        h = h + _bilinear(s_ops, model.hyperfine[i], ops)
        h = h + np.einsum("a,axy->xy", model.zeeman[i], ops)
        h = h + model.quad[i] * (ops[2] @ ops[2])
    if interactions.bath_bath:
        for i, j in combinations(range(len(spins)), 2):
            t = dipole_tensor(spins[i].position, spins[j].position, spins[i].species.gamma, spins[j].species.gamma)
            h = h + _bilinear(bath_ops[i], t, bath_ops[j])
    for offset, (b, m) in enumerate(mean_field):
        a = len(spins) + offset
        pol = m * direction
        h = h + np.einsum("axy,a->xy", s_ops, model.hyperfine[a] @ pol)
        if interactions.bath_bath:
            for i, ops in enumerate(bath_ops):
                t = dipole_tensor(spins[i].position, b.position, spins[i].species.gamma, b.species.gamma)
                h = h + np.einsum("axy,a->xy", ops, t @ pol)
    return check_hermitian(h)
