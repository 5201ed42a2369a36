"""Brute-force evolution of the central system with its entire bath.

Used to validate the cluster expansion on baths small enough for the full
Hilbert space.  Two independent routes are provided: density-matrix
propagation of ``|psi><psi| (x) 1/d`` and an average over bath basis
states (exact because ``1/d`` is the mean of the basis projectors).  For
pure-dephasing Hamiltonians a third route evaluates the overlap of the
two conditionally evolved bath states.
"""

import numpy as np

from .engine import CoherenceCurve, QubitReadout
from .hamiltonian import DEFAULT_DIM_CAP, ClusterTooLargeError, CentralSystem, Interactions, build_cluster_hamiltonian
from .pulses import PulseSequence, pulse_timings
from .spin import check_hermitian, expm_hermitian, propagator_from_eig, spin_operators


class NotPureDephasingError(ValueError):
    """The Hamiltonian couples the two qubit branches."""


class ExactSystem:
    """Full Hamiltonian of central system and bath, below a dimension cap."""

    def __init__(self, cs: CentralSystem, spins, interactions=Interactions(), dim_cap=DEFAULT_DIM_CAP):
        spins = list(spins)
        dim = cs.dim * int(np.prod([b.species.dim for b in spins], dtype=int))
        if dim > dim_cap:
            raise ClusterTooLargeError(f"exact evolution needs dimension {dim}, above cap {dim_cap}")
        self.cs = cs
        self.spins = spins
        self.dim = dim
        self.d_bath = dim // cs.dim
        self.hamiltonian = build_cluster_hamiltonian(cs, spins, (), interactions, dim_cap=dim_cap)


def _sequence_propagators(h, rotation_full, seq: PulseSequence, times):
    evals, evecs = np.linalg.eigh(check_hermitian(h))
    out = []
    for t in times:
        u = np.eye(h.shape[0], dtype=complex)
        free = None
        for step in pulse_timings(seq, t):
            if step == "pi":
                u = rotation_full @ u
                continue
            # every free segment of one schedule has the same length
            if free is None:
                free = propagator_from_eig(evals, evecs, step)
            u = free @ u
        out.append(u)
    return out


def _qubit_state(cs):
    vec = cs.qubit_vectors
    return (vec[:, 0] + vec[:, 1]) / np.sqrt(2)


def bath_product_state(cs: CentralSystem, spins, projections) -> np.ndarray:
    """``|m_1> (x) |m_2> ...`` with each ``m`` measured along the field."""
    b = cs.field_direction()
    state = np.ones(1, dtype=complex)
    for spin, m in zip(spins, projections):
        ops = spin_operators(spin.species.s)
        vals, vecs = np.linalg.eigh(np.einsum("a,aij->ij", b, ops.vector))
        hit = np.flatnonzero(np.abs(vals - m) < 1e-9)
        if len(hit) != 1:
            raise ValueError(f"projection {m} is not an eigenvalue for spin {spin.species.s}")
        state = np.kron(state, vecs[:, hit[0]])
    return state


def _coherence_density(system: ExactSystem, seq, times, h=None, bath_state=None):
    cs = system.cs
    h = system.hamiltonian if h is None else h
    readout = QubitReadout(cs, seq.axis)
    d = system.d_bath
    rot = np.kron(readout.rotation, np.eye(d))
    psi = _qubit_state(cs)
    if bath_state is None:
        rho_bath = np.eye(d) / d
    else:
        rho_bath = np.outer(bath_state, np.conj(bath_state))
    rho0 = np.kron(np.outer(psi, psi.conj()), rho_bath)
    e0, e1 = readout.e0, readout.e1
    values = []
    traces = []
    for u in _sequence_propagators(h, rot, seq, times):
        rho = u @ rho0 @ u.conj().T
        traces.append(np.trace(rho))
        r4 = rho.reshape(cs.dim, d, cs.dim, d)
        reduced = np.einsum("ajbj->ab", r4)
        values.append(e0.conj() @ reduced @ e1)
    return np.array(values), np.array(traces)


def _coherence_basis_average(system: ExactSystem, seq, times):
    cs = system.cs
    readout = QubitReadout(cs, seq.axis)
    d = system.d_bath
    rot = np.kron(readout.rotation, np.eye(d))
    psi = _qubit_state(cs)
    e0, e1 = readout.e0, readout.e1
    values = []
    for u in _sequence_propagators(system.hamiltonian, rot, seq, times):
        total = 0j
        for j in range(d):
            basis = np.zeros(d)
            basis[j] = 1.0
            out = (u @ np.kron(psi, basis)).reshape(cs.dim, d)
            a = e0.conj() @ out  # bath amplitudes conditioned on |0>
            b = e1.conj() @ out
            total += a @ b.conj()
        values.append(total / d)
    return np.array(values)


def exact_coherence(
    cs: CentralSystem,
    spins,
    seq: PulseSequence,
    times,
    interactions=Interactions(),
    dim_cap=DEFAULT_DIM_CAP,
    method: str = "density",
    projections=None,
) -> CoherenceCurve:
    """Coherence of the central spin under the full bath Hamiltonian.

    ``method`` selects ``"density"`` (density-matrix propagation) or
    ``"basis"`` (average over bath basis states).  With ``projections``
    (one ``m`` per spin) the bath starts in that product state instead of
    the maximally mixed state; only the density route supports it.
    Values are normalized by the ``t = 0`` value, as in the cluster
    expansion.
    """
    system = ExactSystem(cs, spins, interactions, dim_cap)
    times = np.asarray(times, dtype=float)
    grid = np.concatenate([[0.0], times])
    if projections is not None:
        if method != "density":
            raise ValueError("a pure bath state needs the density method")
        state = bath_product_state(cs, system.spins, projections)
        raw, _ = _coherence_density(system, seq, grid, bath_state=state)
    elif method == "density":
        raw, _ = _coherence_density(system, seq, grid)
    elif method == "basis":
        raw = _coherence_basis_average(system, seq, grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    meta = {"method": method, "dimension": system.dim, "sequence": seq.label}
    return CoherenceCurve(times, raw[1:] / raw[0], meta)


def density_traces(cs, spins, seq, times, interactions=Interactions(), dim_cap=DEFAULT_DIM_CAP):
    """``Tr rho(t)`` along the evolution, for trace-preservation checks."""
    system = ExactSystem(cs, spins, interactions, dim_cap)
    return _coherence_density(system, seq, np.asarray(times, dtype=float))[1]


def projected_hamiltonians(h, cs: CentralSystem, tol: float = 1e-9):
    """Bath Hamiltonians conditioned on the two qubit levels.

    ``h`` acts on central (x) bath.  Raises :class:`NotPureDephasingError`
    if ``h`` connects a qubit level to any other central state.
    """
    h = np.asarray(h, dtype=complex)
    dc = cs.dim
    d = h.shape[0] // dc
    vecs = cs.eigensystem[1]
    levels = list(cs.levels)
    h4 = np.einsum("ca,cjek,eb->ajbk", vecs.conj(), h.reshape(dc, d, dc, d), vecs)
    scale = max(1.0, float(np.abs(h).max()))
    for a in levels:
        for b in range(dc):
            if b != a and np.abs(h4[a, :, b, :]).max() > tol * scale:
                raise NotPureDephasingError("qubit level is coupled to another central state")
    return h4[levels[0], :, levels[0], :], h4[levels[1], :, levels[1], :]


def overlap_coherence(h, cs: CentralSystem, seq: PulseSequence, times) -> np.ndarray:
    """Pure-dephasing coherence as the bath-state overlap.

    For ``|J>`` running over the bath basis, each branch is propagated with
    its conditional Hamiltonian (branches swap at every pi pulse), and the
    overlaps ``<J_-(t)|J_+(t)>`` are averaged.
    """
    h_plus, h_minus = projected_hamiltonians(h, cs)
    d = h_plus.shape[0]
    times = np.asarray(times, dtype=float)
    values = []
    for t in np.concatenate([[0.0], times]):
        up = np.eye(d, dtype=complex)  # branch starting in |0>
        down = np.eye(d, dtype=complex)
        state_up, state_down = 0, 1
        for step in pulse_timings(seq, t):
            if step == "pi":
                state_up, state_down = state_down, state_up
                continue
            hs = (h_plus, h_minus)
            up = expm_hermitian(hs[state_up], step) @ up
            down = expm_hermitian(hs[state_down], step) @ down
        # <J|down^dagger up|J> averaged over J
        values.append(np.trace(down.conj().T @ up) / d)
    values = np.array(values)
    return values[1:] / values[0]
