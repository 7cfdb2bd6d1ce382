import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bicsim.lattice import (DISORDER_FIXTURE, ModelSpec, basis_dimension, build_basis,
                            build_hamiltonian, embed, interaction_profile, number_operator,
                            preset, project, random_disorder_profile, translate,
                            translation_permutation, type2_subspace_basis)

from oracles import conventional_bh, product_hamiltonian, reorder


def small_specs():
    return st.builds(
        lambda M, N, J, U0, delta, phi, periodic: ModelSpec(
            M=M, N=N, J=J, U0=U0, delta=delta, beta=Fraction(1, 3), phi=phi,
            boundary="periodic" if (periodic and M % 3 == 0) else "open"),
        st.integers(2, 6), st.integers(1, 3), st.floats(0.1, 3.0), st.floats(0.0, 40.0),
        st.floats(0.0, 20.0), st.floats(0.0, 2 * math.pi), st.booleans())


def test_interaction_profile_examples():
    s = ModelSpec(M=6, N=1, U0=25.0, delta=10.0)
    assert interaction_profile(s)[2] == pytest.approx(35.0)
    assert np.allclose(interaction_profile(s.replace(delta=0.0), phi=1.3), 25.0)


@pytest.mark.parametrize("M,N,dim", [(5, 1, 5), (30, 3, 4960), (12, 3, 364), (4, 2, 10)])
def test_basis_dimension(M, N, dim):
    b = build_basis(M, N)
    assert b.dim == dim == basis_dimension(M, N) == math.comb(M + N - 1, N)
    assert len({tuple(s) for s in b.states}) == dim
    assert np.all(b.occupations.sum(axis=1) == N)


def test_basis_order_and_lookup():
    b = build_basis(4, 3)
    rows = [tuple(s) for s in b.states]
    assert rows == sorted(rows, reverse=True)
    assert all(b.index(s) == k for k, s in enumerate(rows))
    assert b.lookup(np.array([[0, 0, 0, 4], [3, 0, 0, 0]])).tolist() == [-1, 0]


def test_basis_cap():
    with pytest.raises(OverflowError):
        build_basis(60, 6, cap=1000)


def test_two_site_examples():
    H = build_hamiltonian(ModelSpec(M=2, N=1, J=1.0)).toarray()
    assert np.allclose(H, [[0, -1], [-1, 0]])
    assert np.allclose(np.linalg.eigvalsh(H), [-1, 1])
    E = np.linalg.eigvalsh(build_hamiltonian(ModelSpec(M=2, N=2, U0=25.0)).toarray())
    r = math.sqrt(25 ** 2 + 16)
    assert np.allclose(E, sorted([25, (25 + r) / 2, (25 - r) / 2]))


def test_type2_subspace():
    b = type2_subspace_basis(3)
    assert b.dim == 6
    assert all(sorted(s[s > 0].tolist()) == [1, 2] for s in b.states)
    assert type2_subspace_basis(12).dim == 12 * 11


def test_embed_project_roundtrip(rng):
    sub = type2_subspace_basis(6)
    full = build_basis(6, 3)
    v = rng.normal(size=sub.dim) + 1j * rng.normal(size=sub.dim)
    v /= np.linalg.norm(v)
    w = embed(v, sub, full.dim)
    back, res = project(w, sub)
    assert res < 1e-12 and np.allclose(back, v)


@given(small_specs())
def test_hermitian_and_number_conserving(spec):
    H = build_hamiltonian(spec)
    assert H.hermiticity_error() < 1e-12
    Nop = number_operator(H.basis)
    assert abs(H.matrix @ Nop - Nop @ H.matrix).max() < 1e-12


@given(st.integers(1, 3), st.floats(0.0, 2 * math.pi), st.floats(0.0, 30.0))
def test_translation_commutes_on_ring(N, phi, delta):
    spec = ModelSpec(M=6, N=N, U0=20.0, delta=delta, phi=phi, boundary="periodic")
    H = build_hamiltonian(spec).toarray()
    perm = translation_permutation(build_basis(6, N), spec.q)
    T = np.zeros_like(H)
    T[perm, np.arange(len(perm))] = 1.0
    assert np.abs(T @ H - H @ T).max() < 1e-12


def test_translation_commutes_fig4():
    spec = preset("fig4")
    H = build_hamiltonian(spec).matrix
    basis = build_basis(spec.M, spec.N)
    rng = np.random.default_rng(0)
    v = rng.normal(size=basis.dim)
    lhs = translate(H @ v, basis, spec.q)
    rhs = H @ translate(v, basis, spec.q)
    assert np.abs(lhs - rhs).max() < 1e-12


@given(st.integers(2, 4), st.integers(1, 3), st.booleans(), st.integers(0, 2 ** 31 - 1))
def test_brute_force_matrix_elements(M, N, periodic, seed):
    rng = np.random.default_rng(seed)
    periodic = periodic and M == 3
    spec = ModelSpec(M=M, N=N, J=float(rng.uniform(0.2, 2)), U0=float(rng.uniform(0, 30)),
                     delta=float(rng.uniform(0, 10)), phi=float(rng.uniform(0, 6.3)),
                     boundary="periodic" if periodic else "open",
                     disorder_strength=float(rng.uniform(0, 2)),
                     disorder_profile=tuple(rng.uniform(0, 0.99, M)))
    H = build_hamiltonian(spec)
    U = interaction_profile(spec)
    ref, occ = product_hamiltonian(M, N, spec.J, U, spec.disorder_strength * np.array(spec.disorder_profile),
                                   periodic)
    assert np.abs(H.toarray() - reorder(ref, occ, H.basis)).max() < 1e-10


@pytest.mark.parametrize("M,N,periodic", [(4, 2, False), (5, 3, False), (6, 3, True), (6, 2, False)])
def test_conventional_oracle(M, N, periodic):
    spec = ModelSpec(M=M, N=N, J=0.7, U0=13.0, delta=0.0, phi=0.4,
                     boundary="periodic" if periodic else "open")
    ref, states = conventional_bh(M, N, 0.7, 13.0, periodic)
    H = build_hamiltonian(spec)
    assert [tuple(s) for s in H.basis.states] == states
    assert np.abs(H.toarray() - ref).max() < 1e-12


def test_spec_validation_and_json():
    s = preset("sm_s13")
    assert ModelSpec.from_json(s.to_json()) == s
    assert s.has_disorder and len(s.disorder_profile) == 12
    assert s.disorder_profile == tuple(DISORDER_FIXTURE)
    with pytest.raises(ValueError):
        ModelSpec(M=10, N=3, boundary="periodic")
    with pytest.raises(ValueError):
        ModelSpec(M=6, N=1, disorder_profile=(0.5,) * 5)
    with pytest.raises(ValueError):
        ModelSpec.from_dict({"M": 6, "N": 1, "colour": 1})
    with pytest.raises(KeyError):
        preset("nope")


def test_random_disorder_profile_seeded():
    a = random_disorder_profile(12, 3)
    assert a == random_disorder_profile(12, 3)
    assert len(a) == 12 and all(0 <= v < 1 for v in a)
