import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bicsim.lattice import ModelSpec, build_basis, build_hamiltonian, interaction_profile
from bicsim.spectral import (DimensionError, SpectralResult, average_g2_type2, bic_candidates,
                             classify_states, cluster_split, diagonalize, eigh_dense,
                             generalized_ipr, interaction_expectation, label_from_interaction,
                             load_cache, save_cache, trace_identity_error, uniform_g2)


def test_eigh_two_by_two():
    E, _ = eigh_dense(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    assert np.allclose(E, [-1, 1])


def test_class_examples():
    b = build_basis(3, 3)
    for occ, label in (((1, 1, 1), "type1"), ((2, 1, 0), "type2"), ((3, 0, 0), "type3")):
        v = b.fock_vector(occ)
        D = interaction_expectation(v, b)
        assert label_from_interaction([D], 3)[0] == label


def test_g2_examples():
    b = build_basis(5, 3)
    assert generalized_ipr(b.fock_vector((0, 3, 0, 0, 0)), b) == pytest.approx(1.0)
    b1 = build_basis(5, 1)
    assert generalized_ipr(np.ones(5) / np.sqrt(5), b1) == pytest.approx(uniform_g2(5))
    with pytest.raises(ValueError):
        generalized_ipr(np.zeros(5), b1)


@given(st.floats(0.0, 30.0), st.floats(0.0, 2 * np.pi))
def test_orthonormal_and_trace(delta, phi):
    spec = ModelSpec(M=7, N=3, U0=20.0, delta=delta, phi=phi)
    H = build_hamiltonian(spec)
    res = diagonalize(H)
    assert res.orthonormality_error() < 1e-10
    assert res.residuals(H).max() < 1e-9
    assert trace_identity_error(H, res) < 1e-8


@given(st.floats(0.0, 2 * np.pi))
def test_reflection_preserves_classes(phi):
    # reversing the sites maps U_j(phi) onto U_j(phi') with phi' = -phi - 2 pi beta (M + 1)
    spec = ModelSpec(M=8, N=3, U0=25.0, delta=10.0, phi=phi)
    mirrored = spec.replace(phi=-phi - 2 * np.pi * float(spec.beta) * (spec.M + 1))
    assert np.allclose(interaction_profile(mirrored), interaction_profile(spec)[::-1])
    a = diagonalize(build_hamiltonian(spec))
    b = diagonalize(build_hamiltonian(mirrored))
    classify_states(a)
    classify_states(b)
    assert np.allclose(a.energies, b.energies, atol=1e-9)
    assert a.counts() == b.counts()
    # the reflected eigenvectors of one are eigenvectors of the other
    flip = a.basis.lookup(a.basis.states[:, ::-1])
    Hb = build_hamiltonian(mirrored).matrix
    va = np.zeros_like(a.eigenvectors)
    va[flip] = a.eigenvectors
    assert np.abs(Hb @ va - va * a.energies).max() < 1e-8


def test_type2_counts_small_open():
    spec = ModelSpec(M=9, N=3, U0=40.0, delta=5.0, phi=0.3)
    res = diagonalize(build_hamiltonian(spec))
    classify_states(res)
    assert res.counts()["type2"] == 9 * 8
    assert res.counts()["type3"] == 9
    single = SpectralResult(res.energies[:1], res.eigenvectors[:, res.indices("type2")[:1]],
                            res.basis, spec, spec.phi)
    classify_states(single)
    assert average_g2_type2(single) == pytest.approx(single.g2[0])


def test_conventional_pairs_extended():
    spec = ModelSpec(M=30, N=2, U0=25.0, delta=0.0)
    res = diagonalize(build_hamiltonian(spec))
    classify_states(res)
    bound = res.indices("type2")
    assert len(bound) == 30
    # edge-localized states excluded: keep states whose density avoids the two end sites
    dens = res.basis.occupations.T @ np.abs(res.eigenvectors[:, bound]) ** 2
    bulk = bound[dens[[0, -1]].sum(axis=0) < 0.1]
    assert res.g2[bulk].max() < 5 * uniform_g2(30)
    assert len(bic_candidates(res)) == 0


def test_windowed_solver_matches_dense():
    spec = ModelSpec(M=10, N=3, U0=25.0, delta=10.0, phi=0.5)
    H = build_hamiltonian(spec)
    full = diagonalize(H)
    win = diagonalize(H, window=(30.0, 12))
    near = np.sort(full.energies[np.argsort(np.abs(full.energies - 30.0))[:12]])
    assert np.allclose(win.energies, near, atol=1e-9)
    with pytest.raises(DimensionError):
        diagonalize(H, dense_cap=10)


def test_cluster_split():
    groups = cluster_split(np.array([0.0, 0.1, 5.0, 5.2, 10.0]), 3)
    assert [g.tolist() for g in groups] == [[0, 1], [2, 3], [4]]


def test_cache_roundtrip(tmp_path):
    spec = ModelSpec(M=5, N=2, U0=10.0, delta=1.0)
    res = diagonalize(build_hamiltonian(spec))
    save_cache(res, tmp_path)
    back = load_cache(spec, res.basis, tmp_path)
    assert back is not None and np.allclose(back.energies, res.energies)
