"""Generalized cluster-correlation expansion of the central-spin coherence.

For a cluster ``C`` the central system and the cluster spins evolve
exactly under the cluster Hamiltonian, with the initial state
``|psi><psi| (x) 1/d`` where ``|psi> = (|0> + |1>)/sqrt(2)`` on the two
qubit eigenstates.  With a mean-field sample the cluster spins instead
start in the sampled product state, so that every cluster sees one
consistent bath configuration.  The cluster coherence is the normalized
``<0| Tr_bath rho(t) |1>``.

The central system alone is the order-0 cluster.  Irreducible
contributions divide out it and every subcluster present in the cluster
set, and the total coherence is its coherence times all irreducible
contributions.

Propagation happens in the eigenbasis of each cluster Hamiltonian: with
``H = V diag(lam) V^H`` and ``M = V^H R V`` for the pulse ``R``, the
sequence propagator is ``P_m M ... M P_1`` with diagonal phase factors
``P_k``, so only the qubit block of the propagator is ever formed.
"""

import logging
import math
from functools import lru_cache
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .clusters import Cluster, ClusterSet, build_connectivity, enumerate_clusters
from .hamiltonian import (
    DEFAULT_DIM_CAP,
    BathModel,
    CentralSystem,
    ClusterTooLargeError,
    Interactions,
    operator_basis,
)
from .pulses import PulseSequence
from .spin import spin_operators

log = logging.getLogger(__name__)

GUARD_THRESHOLD = 1e-10
GUARD_FLAG_FRACTION = 0.01
_CHUNK_BYTES = 16 * 2**20


@dataclass
class CoherenceCurve:
    times: np.ndarray  # ms
    values: np.ndarray  # complex
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have the same shape")

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True, eq=False)
class MeanFieldSample:
    """Frozen projections ``m`` (one per bath spin) used as mean fields."""

    polarizations: np.ndarray
    seed: object = None

    @classmethod
    def draw(cls, bath, seed):
        model = _as_model(None, bath) if not isinstance(bath, BathModel) else bath
        rng = np.random.default_rng(seed)
        return cls(model.draw_polarizations(rng), seed)

    @classmethod
    def zero(cls, n):
        return cls(np.zeros(n))


@dataclass
class CoherenceStats:
    guarded_points: int = 0
    total_points: int = 0
    clusters: dict = field(default_factory=dict)

    @property
    def guarded_fraction(self) -> float:
        return self.guarded_points / self.total_points if self.total_points else 0.0

    @property
    def flagged(self) -> bool:
        return self.guarded_fraction > GUARD_FLAG_FRACTION


def _as_model(cs, bath, interactions=Interactions()) -> BathModel:
    if isinstance(bath, BathModel):
        return bath
    if cs is None:
        cs = CentralSystem()
    return BathModel(cs, bath, interactions)


class QubitReadout:
    """Qubit vectors and the ideal pi rotation on the central space."""

    def __init__(self, cs: CentralSystem, axis: str = "y"):
        vec = cs.qubit_vectors
        self.e0, self.e1 = vec[:, 0], vec[:, 1]
        if axis == "y":
            r = np.array([[0, -1], [1, 0]], dtype=complex)  # exp(-i pi sigma_y / 2)
        else:
            r = np.array([[0, -1j], [-1j, 0]], dtype=complex)  # exp(-i pi sigma_x / 2)
        proj = np.outer(self.e0, self.e0.conj()) + np.outer(self.e1, self.e1.conj())
        self.rotation_qubit = r
        self.rotation = np.eye(cs.dim) - proj + vec @ r @ vec.conj().T


def _phases(evals, fraction, times):
    # (n, D, T); uniform grids use powers of one step phase
    if len(times) > 3:
        step = times[2] - times[1]
        if step > 0 and np.allclose(np.diff(times[1:]), step, rtol=1e-12, atol=0):
            first = _phases(evals, fraction, times[:2])
            out = np.empty(evals.shape + (len(times),), dtype=complex)
            out[:, :, :2] = first
            out[:, :, 2:] = _phases(evals, fraction, np.array([step]))
            np.cumprod(out[:, :, 1:], axis=2, out=out[:, :, 1:])
            return out
    arg = evals[:, :, None] * (fraction * times)[None, None, :]
    out = np.empty(arg.shape, dtype=complex)
    np.cos(arg, out=out.real)
    np.sin(arg, out=out.imag)
    np.negative(out.imag, out=out.imag)
    return out


def _propagate_block(evals, vecs, dc, d, readout: QubitReadout, seq: PulseSequence, times, start=None):
    """Raw qubit coherence ``<0|Tr_B U rho U^H|1>`` for a batch of clusters.

    ``evals`` (n, D), ``vecs`` (n, D, D).  The bath starts maximally mixed,
    or in the pure states ``start`` (n, d) when given.  Returns (n, T)
    complex.
    """
    n, D = evals.shape
    T = len(times)
    qubit = np.stack([readout.e0, readout.e1])  # (2, dc)
    # kq[:, m, (q, j)] = <m| (e_q (x) |j>)
    kq = (qubit @ vecs.reshape(n, dc, d * D).conj()).reshape(n, 2, d, D)
    kq = kq.transpose(0, 3, 1, 2).reshape(n, D, 2 * d)
    k = kq[:, :, :d] + kq[:, :, d:]  # V^H applied to (|0>+|1>) (x) 1
    if start is not None:
        k = k @ start[:, :, None]
    dk = k.shape[2]
    fractions = seq.fractions()
    n_pulses = seq.n_pulses
    cache = {}

    def phases(frac):
        key = float(frac)
        if key not in cache:
            half = 0.5 * key
            # the CPMG inner interval is twice the outer one
            cache[key] = cache[half] ** 2 if half in cache else _phases(evals, key, times)
        return cache[key]

    low_rank = 4 * d < D
    if low_rank and n_pulses == 1:
        return _hahn_low_rank(kq, k, phases(fractions[0]), readout, d)
    squaring = n_pulses > 2 and n_pulses * d > 2 * math.log2(n_pulses) * D
    m = None
    if n_pulses and (squaring or not low_rank):
        rv = (readout.rotation @ vecs.reshape(n, dc, d * D)).reshape(n, D, D)
        m = vecs.conj().transpose(0, 2, 1) @ rv
    if squaring:
        # (P_tau M P_tau)^n by repeated squaring
        half = phases(fractions[0]).transpose(0, 2, 1)  # (n, T, D)
        x = half[:, :, :, None] * m[:, None, :, :] * half[:, :, None, :]
        u = _matrix_power(x, n_pulses)
        y = (u @ k[:, None, :, :]).transpose(0, 2, 1, 3)  # (n, D, T, dk)
    else:
        y = phases(fractions[0])[..., None] * k[:, :, None, :]  # (n, D, T, dk)
        if m is None and n_pulses:
            delta = readout.rotation_qubit - np.eye(2)
            mix = np.kron(delta, np.eye(d))  # acts on the (q, j) index of kq
            kq_h = kq.conj().transpose(0, 2, 1)
            kq_mix = kq @ mix
        for frac in fractions[1:]:
            flat = y.reshape(n, D, T * dk)
            if m is None:
                flat = flat + kq_mix @ (kq_h @ flat)
            else:
                flat = m @ flat
            y = flat.reshape(n, D, T, dk) * phases(frac)[..., None]
    a = (kq.conj().transpose(0, 2, 1) @ y.reshape(n, D, T * dk)).reshape(n, 2, d, T, dk)
    return (a[:, 0] * a[:, 1].conj()).sum(axis=(1, 3)) / (2 * dk)


def _hahn_low_rank(kq, k, phase, readout, d):
    """Single-pulse echo with ``M = 1 + kq (Delta (x) 1) kq^H``.

    The amplitudes ``a = kq^H P M P k`` split into a direct part
    ``kq^H P^2 k`` and a pulse part ``(kq^H P kq') (kq^H P k)``, each a
    contraction of the phases against small per-eigenstate products, so no
    ``(D, T, d)`` array is ever formed.
    """
    n, D, _ = kq.shape
    T = phase.shape[2]
    dk = k.shape[2]
    w = (kq.conj()[:, :, :, None] * k[:, :, None, :]).reshape(n, D, 2 * d * dk)
    kq_mix = kq @ np.kron(readout.rotation_qubit - np.eye(2), np.eye(d))
    g = (kq.conj()[:, :, :, None] * kq_mix[:, :, None, :]).reshape(n, D, 4 * d * d)
    pt = np.ascontiguousarray(phase.transpose(0, 2, 1))  # (n, T, D)
    direct = (pt * pt) @ w
    z = (pt @ w).reshape(n, T, 2 * d, dk)
    a = direct.reshape(n, T, 2 * d, dk) + (pt @ g).reshape(n, T, 2 * d, 2 * d) @ z
    a = a.reshape(n, T, 2, d, dk)
    return (a[:, :, 0] * a[:, :, 1].conj()).sum(axis=(2, 3)) / (2 * dk)


def _matrix_power(x, p):
    result = None
    base = x
    while p:
        if p & 1:
            result = base if result is None else result @ base
        p >>= 1
        if p:
            base = base @ base
    return result


def _cluster_raw(model: BathModel, rows: np.ndarray, polar, hc_tot, hb_tot, readout, seq, times, dim_cap):
    """Normalized cluster coherences for rows of equal species signature."""
    cs = model.cs
    n, k = rows.shape
    dims = tuple(int(x) for x in model.dims[rows[0]])
    basis = operator_basis(cs, dims)
    if basis.dim > dim_cap:
        raise ClusterTooLargeError(f"cluster dimension {basis.dim} exceeds cap {dim_cap}")
    direction = model.direction
    hyperfine = model.hyperfine[rows]  # (n, k, 3, 3)
    local = model.zeeman[rows].copy()
    central_field = np.zeros((n, 3))
    pairs = basis.pairs
    if pairs:
        pi = np.array([rows[:, p] for p, _ in pairs]).T
        pj = np.array([rows[:, q] for _, q in pairs]).T
        ptens = model.pair_tensors(pi, pj)  # (n, npairs, 3, 3)
    else:
        ptens = np.zeros((n, 0, 3, 3))
    if polar is not None:
        m = polar[rows]  # (n, k)
        pol = m[..., None] * direction  # (n, k, 3)
        central_field = hc_tot[None, :] - np.einsum("nkab,nkb->na", hyperfine, pol)
        local += hb_tot[rows]
        for idx, (p, q) in enumerate(pairs):
            t = ptens[:, idx]
            local[:, p] -= np.einsum("nab,nb->na", t, pol[:, q])
            local[:, q] -= np.einsum("nab,na->nb", t, pol[:, p])
    h = basis.assemble(hyperfine, local, model.quad[rows], ptens, central_field)
    evals, vecs = np.linalg.eigh(h)
    both = np.concatenate([[0.0], times])
    start = None if polar is None else product_states(model, rows, polar)
    raw = _propagate_block(evals, vecs, cs.dim, basis.dbath, readout, seq, both, start)
    return raw[:, 1:] / raw[:, :1]


@lru_cache(maxsize=64)
def _projection_states(s: float, direction: tuple) -> np.ndarray:
    # columns are eigenvectors of b.I ordered like m_values (descending m)
    ops = spin_operators(s)
    proj = np.tensordot(np.asarray(direction), ops.vector, axes=1)
    vals, vecs = np.linalg.eigh(proj)
    return np.ascontiguousarray(vecs[:, ::-1])


def product_states(model: BathModel, rows: np.ndarray, polar) -> np.ndarray:
    """Bath product states ``|m_1 ... m_k>`` quantized along the field.

    Each cluster spin starts in the eigenstate of ``b.I`` with the
    projection it carries in the mean-field sample, so a cluster sees the
    same bath configuration inside as outside.  Returns (n, d).
    """
    direction = tuple(float(x) for x in model.direction)
    n, k = rows.shape
    out = np.ones((n, 1), dtype=complex)
    for col in range(k):
        idx = rows[:, col]
        s = float(model.s[idx[0]])
        table = _projection_states(s, direction)  # (dim, dim)
        pick = np.rint(s - np.asarray(polar)[idx]).astype(int)
        vec = table[:, pick].T  # (n, dim)
        out = (out[:, :, None] * vec[:, None, :]).reshape(n, -1)
    return out


def _rows_per_chunk(model: BathModel, order: int, n_times: int, seq: PulseSequence) -> int:
    dims = model.dims.max() if len(model) else 1
    d = int(dims) ** order
    D = model.cs.dim * d
    width = max(d, D) if seq.n_pulses > 2 else d
    per_row = 16 * (n_times + 1) * D * (width + 2 * d) + 16 * D * D * 8
    return int(max(1, min(1024, _CHUNK_BYTES // per_row)))


def _chunk_raw(model, rows, polar, hc_tot, hb_tot, readout, seq, times, dim_cap):
    out = np.empty((len(rows), len(times)), dtype=complex)
    signature = [tuple(model.dims[r]) for r in rows]
    groups = {}
    for i, sig in enumerate(signature):
        groups.setdefault(sig, []).append(i)
    for sig in sorted(groups):
        idx = np.array(groups[sig])
        out[idx] = _cluster_raw(model, rows[idx], polar, hc_tot, hb_tot, readout, seq, times, dim_cap)
    return out


def cluster_coherence(
    cs: CentralSystem,
    cluster,
    bath,
    mean_field: MeanFieldSample = None,
    seq: PulseSequence = PulseSequence(),
    times=None,
    interactions: Interactions = Interactions(),
    dim_cap: int = DEFAULT_DIM_CAP,
) -> np.ndarray:
    """Normalized coherence of the central spin coupled to one cluster.

    Bath spins outside the cluster act through ``mean_field`` only.  An
    empty cluster evolves the central system alone.
    """
    model = _as_model(cs, bath, interactions)
    times = np.asarray(times, dtype=float)
    members = cluster.members if isinstance(cluster, Cluster) else tuple(cluster)
    readout = QubitReadout(cs, seq.axis)
    polar = hc = hb = None
    if mean_field is not None:
        polar = np.asarray(mean_field.polarizations, dtype=float)
        hc, hb = model.meanfield_totals(polar)
    if not members:
        basis = operator_basis(cs, ())
        cf = np.zeros((1, 3)) if hc is None else hc[None, :]
        h = basis.assemble(np.zeros((1, 0, 3, 3)), np.zeros((1, 0, 3)), np.zeros((1, 0)), np.zeros((1, 0, 3, 3)), cf)
        evals, vecs = np.linalg.eigh(h)
        raw = _propagate_block(evals, vecs, cs.dim, 1, readout, seq, np.concatenate([[0.0], times]))
        return raw[0, 1:] / raw[0, 0]
    rows = np.array([members], dtype=int)
    return _cluster_raw(model, rows, polar, hc, hb, readout, seq, times, dim_cap)[0]


def _guarded_divide(num, den, stats: CoherenceStats = None):
    small = np.abs(den) < GUARD_THRESHOLD
    out = np.where(small, 1.0 + 0j, num / np.where(small, 1.0, den))
    if stats is not None:
        stats.guarded_points += int(small.sum())
        stats.total_points += small.size
    return out


def irreducible_coherence(cluster_set: ClusterSet, raw: dict, stats: CoherenceStats = None, empty=None) -> dict:
    """Divide every cluster coherence by its subclusters' irreducible parts.

    ``raw`` maps member tuples (or :class:`Cluster`) to complex curves.
    ``empty`` is the coherence of the central system alone; it divides
    every cluster and defaults to 1.  Clusters are processed in
    increasing order.
    """
    raw = {(c.members if isinstance(c, Cluster) else tuple(c)): np.asarray(v) for c, v in raw.items()}
    tilde = {}
    for cluster in cluster_set:
        key = cluster.members
        den = None if empty is None else np.asarray(empty)
        for sub in cluster_set.subclusters(cluster):
            value = tilde[sub.members]
            den = value if den is None else den * value
        tilde[key] = raw[key] if den is None else _guarded_divide(raw[key], den, stats)
    return tilde


def total_coherence(cluster_set: ClusterSet, irreducible: dict, times=None, meta=None, empty=None) -> CoherenceCurve:
    """Pointwise product of all irreducible contributions in sorted cluster order."""
    total = None if empty is None else np.array(empty, dtype=complex)
    for cluster in cluster_set:
        value = irreducible[cluster.members]
        total = np.array(value, dtype=complex) if total is None else total * value
    if total is None:
        total = np.ones(len(times), dtype=complex)
    if times is None:
        times = np.arange(len(total), dtype=float)
    return CoherenceCurve(times, total, dict(meta or {}))


def compute_coherence(
    cs: CentralSystem,
    bath,
    cluster_set: ClusterSet,
    seq: PulseSequence,
    times,
    mean_field: MeanFieldSample = None,
    interactions: Interactions = Interactions(),
    dim_cap: int = DEFAULT_DIM_CAP,
    workers: int = 1,
):
    """Streaming gCCE for one bath and one mean-field sample.

    Irreducible parts of clusters below the top order are kept in memory;
    top-order clusters are reduced chunk by chunk.  Chunk boundaries
    depend only on the problem size, so the result is the same for any
    ``workers``.

    Returns
    -------
    values : (T,) complex ndarray
    stats : CoherenceStats
    """
    model = _as_model(cs, bath, interactions)
    times = np.asarray(times, dtype=float)
    T = len(times)
    readout = QubitReadout(cs, seq.axis)
    stats = CoherenceStats()
    polar = hc = hb = None
    if mean_field is not None and len(model):
        polar = np.asarray(mean_field.polarizations, dtype=float)
        hc, hb = model.meanfield_totals(polar)
    # the central system alone is the order-0 cluster; every larger
    # cluster contains it
    empty = cluster_coherence(cs, (), model, mean_field, seq, times, interactions, dim_cap)
    total = empty.copy()
    stored = {}
    top = max(cluster_set.by_order) if cluster_set.by_order else 0
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for order in sorted(cluster_set.by_order):
            rows_all = cluster_set.by_order[order]
            stats.clusters[order] = len(rows_all)
            if not len(rows_all):
                continue
            size = _rows_per_chunk(model, order, T, seq)
            chunks = [rows_all[i:i + size] for i in range(0, len(rows_all), size)]
            job = lambda rows: _chunk_raw(model, rows, polar, hc, hb, readout, seq, times, dim_cap)  # noqa: E731
            results = pool.map(job, chunks) if pool else map(job, chunks)
            keep = order < top
            if keep:
                stored[order] = (np.empty((len(rows_all), T), dtype=complex), {})
            offset = 0
            for rows, raw in zip(chunks, results):
                tilde = _irreducible_chunk(rows, raw, stored, empty, stats)
                total = total * np.prod(tilde, axis=0)
                if keep:
                    arr, lookup = stored[order]
                    arr[offset:offset + len(rows)] = tilde
                    for i, r in enumerate(rows.tolist()):
                        lookup[tuple(r)] = offset + i
                offset += len(rows)
    finally:
        if pool:
            pool.shutdown()
    return total, stats


def _irreducible_chunk(rows, raw, stored, empty, stats):
    order = rows.shape[1]
    if order == 1:
        return _guarded_divide(raw, np.broadcast_to(empty, raw.shape), stats)
    singles = stored[1][0]
    if order == 2:
        den = empty * singles[rows[:, 0]] * singles[rows[:, 1]]
        return _guarded_divide(raw, den, stats)
    den = np.repeat(empty[None, :], len(raw), axis=0)
    for i, members in enumerate(rows.tolist()):
        for k in range(1, order):
            arr, lookup = stored[k]
            for sub in combinations(members, k):
                if k == 1:
                    den[i] *= singles[sub[0]]
                elif sub in lookup:
                    den[i] *= arr[lookup[sub]]
    return _guarded_divide(raw, den, stats)


def gcce_coherence(
    cs: CentralSystem,
    bath,
    order: int,
    r_dipole: float,
    seq: PulseSequence,
    times,
    mean_field: MeanFieldSample = None,
    interactions: Interactions = Interactions(),
    dim_cap: int = DEFAULT_DIM_CAP,
    cluster_cap: int = None,
    workers: int = 1,
) -> CoherenceCurve:
    """Enumerate clusters for ``bath`` and return the order-``order`` coherence."""
    model = _as_model(cs, bath, interactions)
    graph = build_connectivity(model.positions, r_dipole) if len(model) else build_connectivity(np.zeros((0, 3)), r_dipole)
    kwargs = {} if cluster_cap is None else {"cap": cluster_cap}
    cset = enumerate_clusters(graph, order, **kwargs)
    values, stats = compute_coherence(cs, model, cset, seq, times, mean_field, interactions, dim_cap, workers)
    meta = {
        "order": order,
        "r_dipole": r_dipole,
        "n_spins": len(model),
        "clusters": dict(stats.clusters),
        "guarded_points": stats.guarded_points,
        "guard_flag": stats.flagged,
        "sequence": seq.label,
    }
    return CoherenceCurve(times, values, meta)
