import numpy as np
import pytest

from gcce.constants import BOHR_GYRO, DIPOLAR_PREFACTOR, ELECTRON_GYRO, MHZ
from gcce.hamiltonian import (
    BathModel,
    CentralSystem,
    ClusterTooLargeError,
    Interactions,
    LevelIdentificationError,
    SingularityError,
    build_cluster_hamiltonian,
    dipole_tensor,
    dipole_tensors,
    select_qubit_levels,
)
from gcce.spin import spin_operators
from gcce.structure import BathSpin

from conftest import random_bath


def test_dipolar_constants():
    # mu0 hbar gamma^2 / (8 pi^2 r^3) in SI: 120.12 kHz for protons 1 A apart,
    # 52.04 MHz for two free electrons 1 nm apart
    gh = 26.7522
    assert DIPOLAR_PREFACTOR * gh**2 / (2 * np.pi) == pytest.approx(120.12, rel=1e-4)
    ge = ELECTRON_GYRO
    assert DIPOLAR_PREFACTOR * ge**2 / 1000 / MHZ == pytest.approx(52.04, rel=2e-4)
    assert abs(ge) == pytest.approx(1.76086e4, rel=1e-5)


def test_dipole_tensor_hand_value():
    # two protons 2 A apart along z: T_zz = -2 k g^2 / r^3, T_xx = T_yy = k g^2 / r^3
    g = 26.7522
    t = dipole_tensor([0, 0, 0], [0, 0, 2.0], g, g)
    k = DIPOLAR_PREFACTOR * g * g / 8
    assert np.allclose(t, np.diag([k, k, -2 * k]))
    assert np.trace(t) == pytest.approx(0.0, abs=1e-9)


def test_dipole_tensor_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(10):
        r1, r2 = rng.normal(size=(2, 3)) * 4
        t = dipole_tensor(r1, r2, 26.75, -17608.6)
        assert np.allclose(t, t.T)
        assert np.allclose(t, dipole_tensor(r2, r1, -17608.6, 26.75))
        assert abs(np.trace(t)) < 1e-9 * np.abs(t).max()
    pos = rng.normal(size=(4, 3))
    many = dipole_tensors(np.zeros(3), pos, 1.0, np.arange(1.0, 5.0))
    for i in range(4):
        assert np.allclose(many[i], dipole_tensor(np.zeros(3), pos[i], 1.0, i + 1.0))


def test_dipole_singularity():
    with pytest.raises(SingularityError):
        dipole_tensor([1, 2, 3], [1, 2, 3], 1.0, 1.0)
    with pytest.raises(SingularityError):
        dipole_tensors(np.zeros((2, 3)), np.zeros((2, 3)), 1.0, 1.0)


def test_free_electron_levels(free_electron):
    h = free_electron.hamiltonian
    assert np.allclose(h, h.conj().T)
    e = free_electron.eigensystem[0]
    lo, hi = free_electron.levels
    assert e[hi] - e[lo] == pytest.approx(2.0023193 * BOHR_GYRO * 3300.0)
    # m_s = -1/2 is the lower level for a positive g
    v = free_electron.qubit_vectors
    assert abs(v[1, 0]) == pytest.approx(1.0)
    assert abs(v[0, 1]) == pytest.approx(1.0)


def test_vanadyl_levels(vanadyl):
    assert vanadyl.dims == (2, 8)
    e = vanadyl.eigensystem[0]
    lo, hi = vanadyl.levels
    freq = (e[hi] - e[lo]) / MHZ
    # g_par mu_B B - A_par m_I, plus the second-order A_perp^2 (I(I+1) - m^2) / 2 nu shift
    nu = 1.968 * BOHR_GYRO * 3300 / MHZ
    second_order = nu + 473.0 / 2 + 166.0**2 * (15.75 - 0.25) / (2 * nu)
    assert freq == pytest.approx(second_order, rel=5e-4)
    v = vanadyl.qubit_vectors
    assert abs(v[12, 0]) ** 2 > 0.9  # (-1/2, -1/2)
    assert abs(v[4, 1]) ** 2 > 0.9  # (+1/2, -1/2)


def test_level_selection_errors(free_electron):
    zero = CentralSystem(field=np.zeros(3))
    with pytest.raises(LevelIdentificationError):
        zero.levels
    with pytest.raises(LevelIdentificationError):
        select_qubit_levels(free_electron.hamiltonian, free_electron, [(0.5,), (0.5,)])
    with pytest.raises(LevelIdentificationError):
        select_qubit_levels(free_electron.hamiltonian, free_electron, [(0.5, 0.5), (-0.5, 0.5)])
    with pytest.raises(LevelIdentificationError):
        select_qubit_levels(free_electron.hamiltonian, free_electron, [(1.5,), (0.5,)])
    explicit = CentralSystem(field=np.zeros(3), qubit_levels=(0, 1))
    assert explicit.levels == (0, 1)
    with pytest.raises(ValueError):
        CentralSystem(qubit_levels=(1, 1))
    with pytest.raises(ValueError):
        CentralSystem(spin=1.0, zfs_tensor=np.eye(3))


def test_explicit_three_spin_hamiltonian(free_electron, registry):
    """Two quantum protons plus one frozen proton, built by hand."""
    h1 = registry["1H"]
    a = BathSpin((1.0, 2.0, 3.0), h1)
    b = BathSpin((-2.0, 1.0, 1.5), h1)
    c = BathSpin((0.5, -3.0, 2.0), h1)
    m_c = -0.5
    got = build_cluster_hamiltonian(free_electron, [a, b], mean_field=[(c, m_c)])

    sx, sy, sz = (0.5 * p for p in (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])))
    pauli = [sx, sy, sz]
    eye = np.eye(2)

    def op(k, slot):
        mats = [eye, eye, eye]
        mats[slot] = pauli[k]
        return np.kron(np.kron(mats[0], mats[1]), mats[2])

    S = [op(k, 0) for k in range(3)]
    A = [op(k, 1) for k in range(3)]
    B = [op(k, 2) for k in range(3)]
    field = free_electron.field
    ge = -2.0023193 * BOHR_GYRO
    g = h1.gamma
    ref = sum(-ge * field[k] * S[k] for k in range(3))
    ref = ref + sum(-g * field[k] * (A[k] + B[k]) for k in range(3))
    zero = np.zeros(3)
    ta, tb, tc = (dipole_tensor(zero, x.position, ge, g) for x in (a, b, c))
    tab = dipole_tensor(a.position, b.position, g, g)
    tac = dipole_tensor(a.position, c.position, g, g)
    tbc = dipole_tensor(b.position, c.position, g, g)
    pol = np.array([0, 0, m_c])
    for i in range(3):
        for j in range(3):
            ref = ref + ta[i, j] * S[i] @ A[j] + tb[i, j] * S[i] @ B[j] + tab[i, j] * A[i] @ B[j]
        ref = ref + (tc @ pol)[i] * S[i] + (tac @ pol)[i] * A[i] + (tbc @ pol)[i] * B[i]
    assert np.allclose(got, ref, atol=1e-9 * np.abs(ref).max())


def test_mean_field_totals_match_explicit_sum(free_electron, registry):
    rng = np.random.default_rng(5)
    spins = random_bath(rng, 12, registry["1H"])
    model = BathModel(free_electron, spins)
    m = model.draw_polarizations(rng)
    assert set(m) <= {-0.5, 0.5}
    h_c, h_b = model.meanfield_totals(m, chunk=5)
    b = model.direction
    assert np.allclose(h_c, sum(model.hyperfine[i] @ (m[i] * b) for i in range(12)))
    for i in range(12):
        ref = sum(model.pair_tensors(i, j) @ (m[j] * b) for j in range(12) if j != i)
        assert np.allclose(h_b[i], ref)
    batch_c, batch_b = model.meanfield_totals(np.stack([m, -m]))
    assert np.allclose(batch_c[1], -h_c) and np.allclose(batch_b[0], h_b)


def test_secular_and_no_bath_bath(free_electron, registry):
    spins = random_bath(np.random.default_rng(0), 3, registry["1H"])
    sec = BathModel(free_electron, spins, Interactions(secular=True))
    assert np.count_nonzero(sec.hyperfine[:, :2, :]) == 0
    off = Interactions(bath_bath=False)
    assert np.all(BathModel(free_electron, spins, off).pair_tensors([0], [1]) == 0)
    h_off = build_cluster_hamiltonian(free_electron, spins[:2], interactions=off)
    h_on = build_cluster_hamiltonian(free_electron, spins[:2])
    assert not np.allclose(h_on, h_off)


def test_host_g_bath_electron(free_electron):
    from gcce.structure import ELECTRON

    host = np.diag([1.98, 1.98, 1.95])
    spins = [BathSpin((10.0, 0.0, 0.0), ELECTRON)]
    free = BathModel(free_electron, spins)
    bound = BathModel(free_electron, spins, Interactions(host_g=host))
    assert free.zeeman[0, 2] == pytest.approx(2.0023193 * BOHR_GYRO * 3300, rel=1e-6)
    assert bound.zeeman[0, 2] == pytest.approx(1.95 * BOHR_GYRO * 3300)


def test_cluster_checks(free_electron, registry):
    spins = random_bath(np.random.default_rng(1), 4, registry["1H"])
    with pytest.raises(ClusterTooLargeError):
        build_cluster_hamiltonian(free_electron, spins, dim_cap=16)
    with pytest.raises(ValueError):
        build_cluster_hamiltonian(free_electron, spins[:2], mean_field=[(spins[0], 0.5)])
    h = build_cluster_hamiltonian(free_electron, random_bath(np.random.default_rng(2), 2, registry["2H"]))
    assert h.shape == (18, 18)
    assert np.allclose(h, h.conj().T)


def test_spin_one_quadrupole_term(free_electron, registry):
    d = registry["2H"]
    assert d.quadrupole_p == 0.0
    from gcce.structure import SpinSpecies

    quad = SpinSpecies("X", 1.0, 1.0, 5.0, 1.0)
    spin = BathSpin((3.0, 0.0, 0.0), quad)
    h = build_cluster_hamiltonian(free_electron, [spin], interactions=Interactions(bath_bath=False))
    plain = BathSpin((3.0, 0.0, 0.0), SpinSpecies("Y", 1.0, 1.0, 0.0, 1.0))
    h0 = build_cluster_hamiltonian(free_electron, [plain])
    iz = spin_operators(1.0).sz
    assert np.allclose(h - h0, 5.0 * np.kron(np.eye(2), iz @ iz))
