import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bicsim.bloch import (SectorSolver, bands_over_grid, build_sectors, cluster_bands,
                          gapless_flag, orbit_table, stitch_bands)
from bicsim.lattice import ModelSpec, build_basis, build_hamiltonian, translate


def test_single_particle_sectors():
    b = build_basis(3, 1)
    secs = build_sectors(b, 3)
    assert len(secs) == 1 and secs[0].dim == 3
    secs = build_sectors(build_basis(6, 1), 3)
    assert [s.dim for s in secs] == [3, 3]


def test_sector_dimensions_sum():
    b = build_basis(30, 3)
    assert sum(s.dim for s in build_sectors(b, 3)) == 4960


@given(st.floats(0.0, 2 * math.pi), st.floats(0.0, 20.0))
def test_sector_completeness_m9(phi, delta):
    spec = ModelSpec(M=9, N=3, U0=15.0, delta=delta, phi=phi, boundary="periodic")
    solver = SectorSolver(spec)
    merged = solver.solve(phi).all_energies()
    full = np.linalg.eigvalsh(build_hamiltonian(spec).toarray())
    assert np.abs(merged - full).max() < 1e-8


def test_sector_vectors_are_translation_eigenvectors():
    spec = ModelSpec(M=9, N=2, U0=5.0, delta=2.0, boundary="periodic")
    solver = SectorSolver(spec)
    for s in solver.sectors:
        B = s.vectors.toarray()
        assert np.allclose(B.conj().T @ B, np.eye(s.dim))
        TB = np.column_stack([translate(B[:, c], solver.basis, spec.q) for c in range(s.dim)])
        assert np.allclose(TB, np.exp(1j * s.kappa) * B)


@pytest.mark.parametrize("M", [6, 9, 12])
def test_free_particle_dispersion(M):
    spec = ModelSpec(M=M, N=1, J=1.0, boundary="periodic")
    solver = SectorSolver(spec)
    bs = solver.solve(0.0)
    k = 2 * np.pi * np.arange(M) / M
    assert np.allclose(np.sort(bs.all_energies()), np.sort(-2 * np.cos(k)))
    for l, s in enumerate(solver.sectors):
        # momenta folded onto kappa: k q = kappa mod 2 pi
        folded = [kk for kk in k if np.isclose(np.exp(1j * kk * spec.q), np.exp(-1j * s.kappa))]
        assert np.allclose(np.sort(bs.energies[l]), np.sort(-2 * np.cos(folded)))


def test_bands_are_phase_periodic():
    spec = ModelSpec(M=9, N=3, U0=30.0, delta=10.0, boundary="periodic")
    a, b = bands_over_grid(spec, [0.3, 0.3 + 2 * np.pi])
    assert np.allclose(a.all_energies(), b.all_energies())


def test_fig3_bands_and_clusters():
    spec = ModelSpec(M=30, N=3, U0=25.0, delta=10.0, phi=math.pi / 5, boundary="periodic")
    bs = SectorSolver(spec).solve(spec.phi)
    assert bs.n_class_bands("type2") * bs.L == 870
    assert [len(c) for c in cluster_bands(bs, 3)] == [29, 29, 29]


def test_stitching_and_gap_flag():
    spec = ModelSpec(M=12, N=2, U0=90.0, delta=20.0, boundary="periodic")
    solver = SectorSolver(spec)
    structs = bands_over_grid(spec, np.linspace(0, 2 * np.pi, 8, endpoint=False), solver)
    table = stitch_bands(structs[0], [0, 1, 2])
    assert table.shape == (4, 3)
    assert all(sorted(row) == sorted(row.tolist()) for row in table)
    flag, gap, _ = gapless_flag(structs, -1)
    assert not flag and gap > 1e-3


def test_orbit_periods():
    tab = orbit_table(build_basis(6, 2), 3)
    # |1,0,0,1,0,0> is invariant under a 3-site shift
    assert sorted(set(tab.periods.tolist())) == [1, 2]
