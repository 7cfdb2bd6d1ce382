import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given
from hypothesis import strategies as st

from bicsim import dynamics as dyn
from bicsim import workflows as wf
from bicsim.lattice import (HamiltonianTerms, ModelSpec, build_basis, build_hamiltonian, embed,
                            preset, type2_subspace_basis)


def random_state(dim, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


@given(st.floats(-1.0, 1.0).filter(lambda x: abs(x) > 1e-3), st.floats(0, 2 * np.pi),
       st.integers(0, 10 ** 6))
def test_chebyshev_matches_expm(dt, phi, seed):
    spec = ModelSpec(M=6, N=3, U0=40.0, delta=10.0, boundary="periodic")
    basis = build_basis(6, 3)
    terms = HamiltonianTerms(spec, basis)
    v = random_state(basis.dim, seed)
    ref = spla.expm_multiply(-1j * dt * terms.matrix(phi).tocsc(), v)
    for method in ("chebyshev", "eigh"):
        out = dyn.Propagator(terms, method).apply(v, phi, dt)
        assert np.abs(out - ref).max() < 1e-11


def test_schedule_invariants():
    s = dyn.PumpSchedule(omega=1e-3)
    assert s.period == pytest.approx(2 * np.pi * 1e3)
    assert s.n_steps * s.step == pytest.approx(s.total_time)
    with pytest.raises(ValueError):
        dyn.PumpSchedule(omega=1e-3, dt=0.2)
    with pytest.raises(ValueError):
        dyn.PumpSchedule(omega=1.0, dt=0.01)
    assert dyn.PumpSchedule(omega=1e-5, dt=1.0, strict=False).step <= 1.0
    with pytest.raises(ValueError):
        dyn.PumpSchedule(omega=0.0)


def test_static_eigenstate_is_stationary():
    spec = ModelSpec(M=9, N=3, U0=30.0, delta=10.0, phi=0.4, boundary="periodic")
    H = build_hamiltonian(spec).toarray()
    E, V = np.linalg.eigh(H)
    traj = dyn.static_evolution(V[:, 50], spec, duration=50.0)
    assert np.abs(traj.densities - traj.densities[0]).max() < 1e-9
    assert np.abs(traj.norms - 1).max() < 1e-10
    rep = dyn.pump_report(traj)
    assert abs(rep["shift_cells"]) < 1e-9
    assert abs(rep["com_linear_shift_cells"]) < 1e-9


def test_backward_check():
    spec = ModelSpec(M=8, N=3, U0=25.0, delta=10.0, phi=0.3)
    v = random_state(build_basis(8, 3).dim, 3)
    assert dyn.backward_check(v, spec, 20.0) == pytest.approx(1.0, abs=1e-10)


def test_pump_is_unitary_and_matches_eigh_method():
    spec = ModelSpec(M=6, N=2, U0=20.0, delta=5.0, boundary="periodic")
    basis = build_basis(6, 2)
    v = random_state(basis.dim, 1)
    sched = dyn.PumpSchedule(omega=0.05, dt=0.05)
    a = dyn.evolve(v, spec, sched, basis=basis)
    b = dyn.evolve(v, spec, sched, basis=basis, method="eigh")
    assert np.abs(a.norms - 1).max() < 1e-10
    assert np.abs(a.final_state - b.final_state).max() < 1e-9


def test_evolve_rejects_bad_input():
    spec = preset("fig4")
    full = build_basis(12, 3)
    v = random_state(full.dim, 0)
    with pytest.raises(ValueError, match="subspace"):
        dyn.evolve(v, spec, dyn.PumpSchedule(omega=0.1, dt=0.005), space=dyn.TYPE2)
    with pytest.raises(ValueError):
        dyn.evolve(2 * v, spec, dyn.PumpSchedule(omega=0.1, dt=0.005))
    with pytest.raises(ValueError):
        dyn.evolve(v, spec.replace(N=2), dyn.PumpSchedule(omega=0.1, dt=0.005), space=dyn.TYPE2)


def test_fock_state():
    b = build_basis(12, 3)
    v = dyn.fock_state(b, {6: 2, 3: 1})
    occ = b.occupations[np.argmax(np.abs(v))]
    assert occ[5] == 2 and occ[2] == 1


def test_compare_subspace_identity():
    spec = preset("fig4")
    pick = wf.qbic_initial(spec, 6, dyn.TYPE2)
    sched = dyn.PumpSchedule(omega=0.1, dt=0.005)
    a = dyn.evolve(pick.state, spec, sched, space=dyn.TYPE2, basis=pick.basis)
    assert dyn.compare_subspace(a, a) == 0.0


@pytest.mark.parametrize("omega", [1e-2, 1e-1, 1.0])
def test_full_run_stays_near_type2_subspace(omega):
    # weight outside the type-(ii) Fock states is the virtual dissociation cloud,
    # O((J/U0)^2), and does not grow with the drive speed
    spec = preset("fig4")
    pick = wf.qbic_initial(spec, 6, dyn.TYPE2)
    full = build_basis(12, 3)
    inside = pick.basis.parent
    leak = []
    sched = dyn.PumpSchedule(omega=omega, dt=min(0.1, 2 * np.pi / omega / 1000))
    dyn.evolve(embed(pick.state, pick.basis, full.dim), spec, sched, basis=full, n_samples=10,
               callback=lambda s, t, psi: leak.append(1 - np.sum(np.abs(psi[inside]) ** 2)))
    assert max(leak) < 3e-3


def test_embedded_subspace_state_in_full_space():
    sub = type2_subspace_basis(12)
    pick = wf.qbic_initial(preset("fig4"), 6, dyn.TYPE2)
    full = build_basis(12, 3)
    w = embed(pick.state, sub, full.dim)
    basis, psi = dyn._prepare(w, preset("fig4"), dyn.TYPE2, None)
    assert np.allclose(psi, pick.state)


def dressed_oracle(spec, phi):
    full, sub = build_basis(spec.M, 3), type2_subspace_basis(spec.M)
    P = np.asarray(sub.parent)
    Q = np.setdiff1d(np.arange(full.dim), P)
    terms = HamiltonianTerms(spec, full)
    V = terms.hopping.toarray()
    E = terms.diagonal(phi)
    H = V[np.ix_(P, P)] + np.diag(E[P])
    for a in range(len(P)):
        for b in range(len(P)):
            H[a, b] += 0.5 * sum(V[P[a], c] * V[c, P[b]] * (1 / (E[P[a]] - E[c]) + 1 / (E[P[b]] - E[c]))
                                 for c in Q if V[P[a], c] and V[c, P[b]])
    return H, sub


@pytest.mark.parametrize("periodic", [True, False])
def test_dressed_matrix_and_step(periodic):
    spec = ModelSpec(M=6, N=3, U0=60.0, delta=8.0, boundary="periodic" if periodic else "open")
    H, sub = dressed_oracle(spec, 0.9)
    prop = dyn.DressedPropagator(spec, sub)
    assert np.abs(prop.matrix(0.9).toarray() - H).max() < 1e-13
    v = random_state(sub.dim, 1)
    ref = spla.expm_multiply(-1j * 0.3 * H, v)
    assert np.abs(prop.apply(v, 0.9, 0.3) - ref).max() < 1e-11


def test_dressing_recovers_type2_spectrum():
    spec = ModelSpec(M=6, N=3, U0=60.0, delta=8.0, boundary="periodic")
    res = np.linalg.eigvalsh(build_hamiltonian(spec).toarray())
    sub = type2_subspace_basis(6)
    exact = np.sort(res[(res > 30) & (res < 120)])
    assert len(exact) == sub.dim
    H, _ = dressed_oracle(spec, spec.phi)
    plain = HamiltonianTerms(spec, sub).dense(spec.phi)
    err_plain = np.abs(np.linalg.eigvalsh(plain) - exact).max()
    err_dressed = np.abs(np.linalg.eigvalsh(H) - exact).max()
    # second order removes the J^2/U shifts, leaving O(J^3/U^2)
    assert err_dressed < 0.1 * err_plain
