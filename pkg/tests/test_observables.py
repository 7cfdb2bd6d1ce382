import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from bicsim.lattice import ModelSpec, build_basis, build_hamiltonian, translate
from bicsim.observables import (CurrentOperators, center_of_mass, circular_center, correlation,
                                decay_ratio, density, local_current, pair_site, principal_shift,
                                twist_center, unwrap_positions)


def random_state(basis, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return v / np.linalg.norm(v)


def test_fock_density_and_com():
    b = build_basis(12, 3)
    occ = np.zeros(12, dtype=int)
    occ[5], occ[2] = 2, 1
    v = b.fock_vector(occ)
    rho = density(v, b)
    assert rho[5] == 2 and rho[2] == 1 and rho.sum() == 3
    occ = np.zeros(12, dtype=int)
    occ[5], occ[11] = 2, 1
    assert center_of_mass(b.fock_vector(occ), b) == pytest.approx(8.0)
    assert pair_site(b.fock_vector(occ), b) == 6


def test_translation_adds_q_to_com():
    b = build_basis(12, 3)
    occ = np.zeros(12, dtype=int)
    occ[3], occ[5] = 2, 1
    v = b.fock_vector(occ)
    assert center_of_mass(translate(v, b, 3), b) - center_of_mass(v, b) == pytest.approx(3.0)


def test_pair_correlation_example():
    b = build_basis(5, 2)
    C = correlation(b.fock_vector((0, 0, 2, 0, 0)), b)
    expected = np.zeros((5, 5))
    expected[2, 2] = 2
    assert np.allclose(C, expected)
    with pytest.raises(ValueError):
        correlation(b.fock_vector((0, 0, 2, 0, 0)), b, 3)


@given(st.integers(2, 5), st.integers(2, 4), st.integers(0, 10 ** 6))
def test_sum_rules(M, N, seed):
    b = build_basis(M, N)
    v = random_state(b, seed)
    assert density(v, b).sum() == pytest.approx(N, abs=1e-9)
    C2 = correlation(v, b, 2)
    assert C2.sum() == pytest.approx(N * (N - 1), abs=1e-9)
    assert np.allclose(C2.sum(axis=1), (N - 1) * density(v, b))
    if N >= 3:
        C3 = correlation(v, b, 3)
        assert C3.sum() == pytest.approx(N * (N - 1) * (N - 2), abs=1e-9)
        assert np.allclose(C3.sum(axis=2), (N - 2) * C2)


def test_third_order_on_fock_states():
    b = build_basis(4, 3)
    assert correlation(b.fock_vector((3, 0, 0, 0)), b, 3)[0, 0, 0] == pytest.approx(6.0)
    C = correlation(b.fock_vector((2, 1, 0, 0)), b, 3)
    # a+a+a+ aaa on |2,1>: the ordered triples (0,0,1) and permutations give 2 each
    assert C[0, 0, 1] == pytest.approx(2.0) and C[0, 1, 0] == pytest.approx(2.0)
    assert C[0, 0, 0] == 0 and C.sum() == pytest.approx(6.0)


@given(st.integers(0, 10 ** 6))
def test_real_states_carry_no_current(seed):
    b = build_basis(6, 3)
    spec = ModelSpec(M=6, N=3, boundary="periodic")
    v = np.random.default_rng(seed).normal(size=b.dim)
    assert np.allclose(local_current(v / np.linalg.norm(v), spec, b), 0)


@given(st.integers(0, 10 ** 6), st.booleans())
def test_continuity_equation(seed, periodic):
    spec = ModelSpec(M=6, N=2, J=0.8, U0=7.0, delta=3.0, phi=0.4,
                     boundary="periodic" if periodic else "open")
    H = build_hamiltonian(spec)
    b = H.basis
    v = random_state(b, seed)
    h = 1e-5
    U = sla.expm(-1j * h * H.toarray())
    drho = (density(U @ v, b) - density(U.conj().T @ v, b)) / (2 * h)
    J = local_current(v, spec, b)
    assert np.allclose(drho, J - np.roll(J, 1), atol=1e-6)


def test_ring_eigenstate_current_uniform():
    spec = ModelSpec(M=6, N=2, U0=5.0, delta=2.0, boundary="periodic")
    H = build_hamiltonian(spec)
    E, V = np.linalg.eigh(H.toarray())
    ops = CurrentOperators(H.basis, True)
    # complex eigenstates with definite momentum carry uniform, nonzero current
    from bicsim.bloch import SectorSolver

    solver = SectorSolver(spec)
    sec = solver.sectors[1]
    e, c = np.linalg.eigh(solver.block(1, spec.phi))
    v = sec.lift(c[:, 0])
    J = ops.expectation(v / np.linalg.norm(v), spec.J)
    assert np.allclose(J, J[0], atol=1e-10)


def test_decay_ratio_of_eigenstate_is_one():
    spec = ModelSpec(M=8, N=3, U0=20.0, delta=5.0, phi=0.3)
    H = build_hamiltonian(spec)
    E, V = np.linalg.eigh(H.toarray())
    v = V[:, -1]
    r = decay_ratio(v, H, pair_site(v, H.basis), [0, 10, 100, 1000])
    assert np.allclose(r, 1.0, atol=1e-9)


def test_circular_helpers():
    w = np.zeros(12)
    w[11] = 1
    assert circular_center(w)[0] == pytest.approx(12.0)
    x = np.array([11.0, 11.9, 0.5, 1.5])
    assert np.allclose(unwrap_positions(x, 12), [11.0, 11.9, 12.5, 13.5])
    assert principal_shift(9.0, 12) == pytest.approx(-3.0)
    b = build_basis(12, 3)
    occ = np.zeros(12, dtype=int)
    occ[1], occ[4] = 2, 1
    # defined modulo M / N = 4 sites
    assert twist_center(b.fock_vector(occ), b) % 4 == pytest.approx(3.0)
