"""Analytic reductions: N-boson bound-state AAH model and the SVD picture of BICs.

The AAH reduction treats N bosons glued on one site as a single particle.
The SVD picture writes a three-boson BIC as a symmetrized product of a
single-particle standing wave phi and a localized pair chi.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .lattice import (FockBasis, HamiltonianMatrix, HamiltonianTerms, ModelSpec, build_basis,
                      build_hamiltonian, disorder_potential, interaction_profile)


@dataclass
class AAHModel:
    """H = sum_j onsite_j d+_j d_j + J_eff sum_j (d+_{j+1} d_j + h.c.) for an N-boson composite."""

    N: int
    onsite: np.ndarray
    J_eff: float
    periodic: bool
    method: str

    def matrix(self) -> np.ndarray:
        M = len(self.onsite)
        H = np.diag(self.onsite).astype(float)
        for j in range(M - 1):
            H[j, j + 1] = H[j + 1, j] = self.J_eff
        if self.periodic and M > 2:
            H[0, M - 1] = H[M - 1, 0] = self.J_eff
        return H

    def energies(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix())

    def to_json(self) -> str:
        return json.dumps({"N": self.N, "onsite": [float(x) for x in self.onsite],
                           "J_eff": self.J_eff, "periodic": self.periodic, "method": self.method})


def leading_hopping(N: int, J: float, U0: float) -> float:
    """N-th order amplitude for moving an N-boson cluster one site.

    The path |N,0> -> |N-1,1> -> ... -> |0,N> has bosonic factors whose product
    is N!, and intermediate detunings U0 k (N - k).
    """
    denom = math.prod(k * (N - k) for k in range(1, N))
    return (-J) ** N * math.factorial(N) / (U0 ** (N - 1) * denom)


def aah_effective(spec: ModelSpec, N: int | None = None, method: str = "closed") -> AAHModel:
    """Effective model of the fully bound N-boson cluster.

    method:
      ``closed``     third-order result for N=3 with the uniform 3J^2/U0 shift dropped;
      ``projector``  degenerate perturbation theory evaluated numerically on the
                     Fock space (onsite to third order, hopping at its leading order N);
      ``exact``      block diagonalization of the exact cluster states (all orders).
    """
    N = spec.N if N is None else N
    if spec.U0 <= 0 or spec.U0 < 5 * max(abs(spec.delta), spec.J):
        warnings.warn("the bound-cluster expansion needs U0 >> delta, J", RuntimeWarning, stacklevel=2)
    if method == "closed":
        if N != 3:
            raise ValueError("the closed form is the N=3 result; use method='projector' or 'exact'")
        j = np.arange(1, spec.M + 1)
        c = np.cos(2 * np.pi * float(spec.beta) * j + spec.phi)
        onsite = 3 * (spec.U0 + (1 - spec.J ** 2 / spec.U0 ** 2) * spec.delta * c)
        onsite = onsite + 3 * disorder_potential(spec)
        return AAHModel(3, onsite, -3 * spec.J ** 3 / (2 * spec.U0 ** 2), spec.periodic, method)
    if method == "projector":
        return _projector_model(spec, N)
    if method == "exact":
        return _exact_model(spec, N)
    raise ValueError(f"unknown method {method!r}")


def _cluster_indices(basis: FockBasis) -> np.ndarray:
    """Basis index of |N on site j> for j = 0..M-1."""
    N = basis.N
    out = np.empty(basis.M, dtype=int)
    for j in range(basis.M):
        occ = np.zeros(basis.M, dtype=int)
        occ[j] = N
        out[j] = basis.index(occ)
    return out


def _projector_model(spec: ModelSpec, N: int) -> AAHModel:
    s = spec.replace(N=N)
    basis = build_basis(s.M, N)
    terms = HamiltonianTerms(s, basis)
    pairs = terms.pairs.sum(axis=1)
    E0 = s.U0 * N * (N - 1) / 2
    H0 = s.U0 * pairs
    V = (terms.matrix(s.phi) - sp.diags(H0)).tocsr()
    cl = _cluster_indices(basis)
    inside = np.zeros(basis.dim, dtype=bool)
    inside[cl] = True
    denom = E0 - H0
    Sdiag = np.where(inside, 0.0, 1.0 / np.where(inside, 1.0, denom))
    S = sp.diags(Sdiag)
    S2 = sp.diags(Sdiag ** 2)
    P = sp.csr_matrix((np.ones(len(cl)), (np.arange(len(cl)), cl)), shape=(len(cl), basis.dim))
    PV = P @ V
    VP = V @ P.T
    h1 = (PV @ P.T).toarray()
    h2 = (PV @ S @ VP).toarray()
    h3 = (PV @ S @ V @ S @ VP).toarray()
    corr = (PV @ S2 @ VP).toarray()
    Heff = E0 * np.eye(len(cl)) + h1 + h2 + h3 - 0.5 * (corr @ h1 + h1 @ corr)
    onsite = np.real(np.diag(Heff)).copy()
    if N > 3:
        # hopping first appears at order N
        chain = VP
        for _ in range(N - 1):
            chain = V @ (S @ chain)
        hopN = (P @ chain).toarray()
    else:
        hopN = Heff
    M = s.M
    nn = [hopN[j, j + 1] for j in range(M - 1)]
    J_eff = float(np.real(np.mean(nn)))
    return AAHModel(N, onsite, J_eff, s.periodic, "projector")


def _exact_model(spec: ModelSpec, N: int) -> AAHModel:
    s = spec.replace(N=N)
    basis = build_basis(s.M, N)
    H = build_hamiltonian(s, basis)
    M = s.M
    if basis.dim <= 6000:
        E, V = np.linalg.eigh(H.toarray())
        E, V = E[-M:], V[:, -M:]
    else:
        from scipy.sparse.linalg import eigsh
        E, V = eigsh(H.matrix, k=M, which="LA")
    cl = _cluster_indices(basis)
    A = V[cl, :]                     # overlaps <N_j | exact cluster state>
    # symmetric orthonormalization of the projected states
    U, _, Wh = np.linalg.svd(A)
    O = U @ Wh
    Heff = O @ np.diag(E) @ O.conj().T
    Heff = 0.5 * (Heff + Heff.conj().T)
    nn = [Heff[j, j + 1] for j in range(M - 1)]
    return AAHModel(N, np.real(np.diag(Heff)), float(np.real(np.mean(nn))), s.periodic, "exact")


def cluster_energies(spec: ModelSpec, N: int | None = None) -> np.ndarray:
    """Exact energies of the M states of the fully bound cluster (the top of the spectrum)."""
    N = spec.N if N is None else N
    s = spec.replace(N=N)
    H = build_hamiltonian(s)
    E = np.linalg.eigvalsh(H.toarray())
    return E[-s.M:]


# --------------------------------------------------------------------------
# first quantization helpers


@lru_cache(maxsize=16)
def _tensor_map(M: int, N: int, states: bytes) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flat tensor indices of every ordering of each Fock state, with sqrt(prod n! / N!)."""
    occs = np.frombuffer(states, dtype=np.int64).reshape(-1, M)
    flat, owner, first, factor = [], [], [], []
    for k, occ in enumerate(occs):
        t = tuple(j for j, n in enumerate(occ) for _ in range(int(n)))
        perms = sorted(set(itertools.permutations(t)))
        idx = np.ravel_multi_index(np.array(perms).T, (M,) * N)
        flat.append(idx)
        owner.append(np.full(len(idx), k))
        first.append(np.ravel_multi_index(t, (M,) * N))
        factor.append(math.sqrt(math.prod(math.factorial(int(n)) for n in occ) / math.factorial(N)))
    return np.concatenate(flat), np.concatenate(owner), np.array(first), np.array(factor)


def _map_for(basis: FockBasis):
    states = np.ascontiguousarray(basis.states, dtype=np.int64)
    return _tensor_map(basis.M, basis.N, states.tobytes())


def to_tensor(state: np.ndarray, basis: FockBasis) -> np.ndarray:
    """Symmetric first-quantized amplitudes psi[i1, ..., iN] with sum |psi|^2 = <state|state>."""
    flat, owner, _, factor = _map_for(basis)
    psi = np.zeros(basis.M ** basis.N, dtype=complex)
    psi[flat] = (np.asarray(state) * factor)[owner]
    return psi.reshape((basis.M,) * basis.N)


def from_tensor(psi: np.ndarray, basis: FockBasis) -> np.ndarray:
    """Fock coefficients of a symmetric tensor (inverse of ``to_tensor``)."""
    _, _, first, factor = _map_for(basis)
    return np.asarray(psi, dtype=complex).ravel()[first] / factor


def symmetrized_product(phi: np.ndarray, chi: np.ndarray) -> np.ndarray:
    """psi_ijk = phi_i chi_jk + phi_j chi_ik + phi_k chi_ij."""
    return (np.einsum("i,jk->ijk", phi, chi) + np.einsum("j,ik->ijk", phi, chi)
            + np.einsum("k,ij->ijk", phi, chi))


@dataclass
class BicDecomposition:
    phi_f: np.ndarray
    chi_l: np.ndarray
    singular_values: np.ndarray
    fidelity: float
    bic_like: bool
    reconstruction: np.ndarray      # Fock coefficients, normalized

    @property
    def D11(self) -> float:
        return float(self.singular_values[0])

    @property
    def D22(self) -> float:
        return float(self.singular_values[1])


def _participation(v: np.ndarray) -> float:
    p = np.abs(v) ** 2
    p = p / p.sum()
    return float(1.0 / (p ** 2).sum())


def _fit_chi(psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Least-squares symmetric chi for psi ~ S[phi x chi] (sparse normal equations)."""
    M = len(phi)
    a, b = np.triu_indices(M)
    cols = np.arange(len(a))
    i = np.arange(M)
    # the symmetric basis matrix E_ab has one entry on the diagonal, two off it
    w = (np.where(a == b, 0.5, 1.0)[:, None] * phi[None, :]).ravel()
    rows, vals, cidx = [], [], []
    for p, q in ((a, b), (b, a)):
        for place in ((i[None, :], p[:, None], q[:, None]), (p[:, None], i[None, :], q[:, None]),
                      (p[:, None], q[:, None], i[None, :])):
            rows.append(np.ravel_multi_index(np.broadcast_arrays(*place), (M, M, M)).ravel())
            vals.append(w)
            cidx.append(np.repeat(cols, M))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cidx))),
                      shape=(M ** 3, len(a)))
    AH = A.conj().T
    x = np.linalg.solve((AH @ A).toarray(), AH @ psi.ravel())
    chi = np.zeros((M, M), dtype=complex)
    chi[a, b] = x
    chi[b, a] = x
    return chi


def svd_decompose(state: np.ndarray, basis: FockBasis, ratio_flag: float = 0.2) -> BicDecomposition:
    """Split a three-boson state into a standing wave and a localized pair.

    Step one: SVD of the M x M^2 reshaped amplitude tensor; of the two
    dominant left vectors the more extended one is the standing wave.
    Step two: the symmetric pair tensor is fitted by least squares, and its
    own SVD exposes the localized pair.
    """
    if basis.N != 3:
        raise ValueError("svd_decompose needs a three-boson state")
    M = basis.M
    state = np.asarray(state, dtype=complex)
    state = state / np.linalg.norm(state)
    psi = to_tensor(state, basis)
    U, s, _ = np.linalg.svd(psi.reshape(M, M * M), full_matrices=False)
    cand = [U[:, 0], U[:, 1]]
    phi = max(cand, key=_participation)
    k = int(np.argmax(np.abs(phi)))
    phi = phi * (abs(phi[k]) / phi[k])
    chi = _fit_chi(psi, phi)
    if abs(np.linalg.norm(phi) - 1) > 1e-10 or np.abs(chi - chi.T).max() > 1e-12:
        raise RuntimeError("decomposition broke phi normalization or chi symmetry")
    rec = symmetrized_product(phi, chi)
    rec_f = from_tensor(rec, basis)
    rec_f = rec_f / np.linalg.norm(rec_f)
    fid = float(abs(np.vdot(rec_f, state)))
    bic_like = bool(len(s) < 3 or s[2] / s[1] <= ratio_flag)
    return BicDecomposition(phi, chi, s, fid, bic_like, rec_f)


def product_state(phi: np.ndarray, pair_state: np.ndarray, pair_basis: FockBasis,
                  basis3: FockBasis) -> np.ndarray:
    """Normalized Fock vector of S[phi x chi] with chi from a two-boson state."""
    chi = to_tensor(pair_state, pair_basis)
    v = from_tensor(symmetrized_product(phi, chi), basis3)
    return v / np.linalg.norm(v)


def effective_bic_hamiltonian(spec: ModelSpec, phi_f: np.ndarray,
                              basis: FockBasis | None = None) -> HamiltonianMatrix:
    """Two-boson Hamiltonian with the standing wave as a background potential.

    H = hopping + sum_j 2 U_j |phi_j|^2 n_j + 1/2 sum_j U_j n_j (n_j - 1), with
    the hopping sign of the full model.
    """
    phi_f = np.asarray(phi_f)
    if len(phi_f) != spec.M:
        raise ValueError(f"phi_f has length {len(phi_f)}, expected M={spec.M}")
    nrm = np.linalg.norm(phi_f)
    if abs(nrm - 1) > 1e-8:
        raise ValueError(f"phi_f must be normalized (norm {nrm:.6g})")
    s2 = spec.replace(N=2)
    basis = basis if basis is not None else build_basis(s2.M, 2)
    U = interaction_profile(s2)
    return build_hamiltonian(s2, basis, extra_onsite=2 * U * np.abs(phi_f) ** 2)


def single_particle_energy(spec: ModelSpec, phi_f: np.ndarray) -> float:
    """<phi| -J sum (a+_{j+1} a_j + h.c.) + onsite disorder |phi> for one boson."""
    h = build_hamiltonian(spec.replace(N=1, delta=0.0, U0=0.0)).toarray()
    return float(np.real(np.vdot(phi_f, h @ phi_f)))


@dataclass
class ClosureResult:
    fidelity: float
    pair_energy: float
    pair_site: int
    target_energy: float
    decomposition: BicDecomposition
    pair_state: np.ndarray


def effective_closure(spec: ModelSpec, state: np.ndarray, basis: FockBasis,
                      energy: float | None = None) -> ClosureResult:
    """Rebuild a three-boson BIC from its standing wave and the effective pair model.

    The pair eigenstate is the one with the largest overlap with the fitted
    chi; ``target_energy`` (E_BIC minus the standing-wave kinetic energy) is
    reported for comparison.
    """
    dec = svd_decompose(state, basis)
    H2 = effective_bic_hamiltonian(spec, dec.phi_f)
    E2, V2 = np.linalg.eigh(H2.toarray())
    chi_f = from_tensor(dec.chi_l, H2.basis)
    chi_f = chi_f / np.linalg.norm(chi_f)
    k = int(np.argmax(np.abs(V2.conj().T @ chi_f)))
    pair = V2[:, k]
    psi = product_state(dec.phi_f, pair, H2.basis, basis)
    fid = float(abs(np.vdot(psi, state / np.linalg.norm(state))))
    from .observables import pair_site

    target = math.nan if energy is None else energy - single_particle_energy(spec, dec.phi_f)
    return ClosureResult(fid, float(E2[k]), pair_site(pair, H2.basis), target, dec, pair)
