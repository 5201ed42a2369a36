import numpy as np
import pytest

from gcce.spin import (
    InvalidSpinError,
    NotHermitianError,
    ShapeError,
    check_hermitian,
    embed,
    expm_hermitian,
    spin_dim,
    spin_operators,
)

SPINS = (0.5, 1.0, 1.5, 2.0, 3.5)


@pytest.mark.parametrize("s", SPINS)
def test_commutation_relations(s):
    ops = spin_operators(s)
    sx, sy, sz = ops.sx, ops.sy, ops.sz
    assert np.allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-12)
    assert np.allclose(sy @ sz - sz @ sy, 1j * sx, atol=1e-12)
    assert np.allclose(sz @ sx - sx @ sz, 1j * sy, atol=1e-12)


@pytest.mark.parametrize("s", SPINS)
def test_casimir_and_ladder(s):
    ops = spin_operators(s)
    casimir = ops.sx @ ops.sx + ops.sy @ ops.sy + ops.sz @ ops.sz
    assert np.allclose(casimir, s * (s + 1) * np.eye(ops.dim), atol=1e-12)
    assert np.allclose(ops.splus, ops.sx + 1j * ops.sy)
    assert np.allclose(ops.sminus, ops.splus.conj().T)


def test_spin_half_is_half_pauli():
    ops = spin_operators(0.5)
    assert np.allclose(ops.sz, np.diag([0.5, -0.5]))
    assert np.allclose(ops.sx, [[0, 0.5], [0.5, 0]])
    assert np.allclose(ops.sy, [[0, -0.5j], [0.5j, 0]])


def test_basis_ordered_by_descending_m():
    assert np.allclose(spin_operators(1.5).m_values, [1.5, 0.5, -0.5, -1.5])
    assert np.allclose(np.diag(spin_operators(1.0).sz).real, [1, 0, -1])


@pytest.mark.parametrize("bad", [0, -0.5, 0.3, 1.25])
def test_invalid_spin(bad):
    with pytest.raises(InvalidSpinError):
        spin_operators(bad)


def test_spin_dim():
    assert [spin_dim(s) for s in (0.5, 1, 3.5)] == [2, 3, 8]


def test_embed_matches_kron():
    sz = spin_operators(0.5).sz
    iz = spin_operators(1.0).sz
    assert np.allclose(embed(sz, 0, [2, 3]), np.kron(sz, np.eye(3)))
    assert np.allclose(embed(iz, 1, [2, 3]), np.kron(np.eye(2), iz))
    mid = embed(iz, 1, [2, 3, 2])
    assert mid.shape == (12, 12)
    assert np.allclose(mid, np.kron(np.kron(np.eye(2), iz), np.eye(2)))


def test_embed_errors():
    with pytest.raises(ShapeError):
        embed(np.eye(2), 1, [2, 3])
    with pytest.raises(ShapeError):
        embed(np.eye(2), 2, [2, 2])


def test_embedded_operators_on_different_sites_commute():
    a = embed(spin_operators(0.5).sx, 0, [2, 2])
    b = embed(spin_operators(0.5).sy, 1, [2, 2])
    assert np.allclose(a @ b, b @ a)


def test_expm_hermitian_against_scipy():
    from scipy.linalg import expm

    rng = np.random.default_rng(1)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = m + m.conj().T
    for t in (0.0, 0.37, 2.0):
        assert np.allclose(expm_hermitian(h, t), expm(-1j * h * t), atol=1e-12)
    stack = expm_hermitian(h, np.array([0.1, 0.2]))
    assert stack.shape == (2, 6, 6)
    assert np.allclose(stack[1], expm(-0.2j * h), atol=1e-12)


def test_propagator_is_unitary():
    h = spin_operators(1.5).sx * 3.0 + spin_operators(1.5).sz
    u = expm_hermitian(h, 1.7)
    assert np.allclose(u @ u.conj().T, np.eye(4), atol=1e-12)


def test_non_hermitian_rejected():
    with pytest.raises(NotHermitianError):
        check_hermitian(np.array([[0, 1], [0, 0]]))
    with pytest.raises(NotHermitianError):
        expm_hermitian(np.array([[1, 2j], [2j, 0]]), 1.0)
