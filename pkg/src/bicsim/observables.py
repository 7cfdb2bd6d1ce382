"""Measured quantities: densities, correlators, positions, currents, decay ratio."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.special as sps

from .lattice import FockBasis, ModelSpec, bonds, hop_operator


def _probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(np.asarray(state)) ** 2
    norm = p.sum(axis=0)
    if np.any(norm <= 1e-300):
        raise ValueError("zero-norm state")
    return p / norm


def density(state: np.ndarray, basis: FockBasis) -> np.ndarray:
    """<n_j> per site; for a 2D input, one profile per column (shape M x k)."""
    return basis.occupations.T @ _probabilities(state)


def cluster_density(state: np.ndarray, basis: FockBasis, k: int = 2) -> np.ndarray:
    """<C(n_j, k)> per site: the number of k-boson clusters sitting on site j.

    ``k=1`` is the density, ``k=2`` the doubly-occupied (bound pair) weight.
    """
    occ = basis.occupations
    return sps.comb(occ, k).T @ _probabilities(state)


def correlation(state: np.ndarray, basis: FockBasis, order: int = 2) -> np.ndarray:
    """Normal-ordered density correlators.

    order 2: C_ij = <a+_i a+_j a_j a_i> = <n_i n_j> - delta_ij <n_i>
    order 3: C_ijk = <a+_i a+_j a+_k a_k a_j a_i>
    """
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    if order > basis.N:
        raise ValueError(f"order {order} exceeds particle number {basis.N}")
    p = _probabilities(state)
    n = basis.occupations
    d1 = n.T @ p
    m2 = np.einsum("s,si,sj->ij", p, n, n)
    if order == 2:
        return m2 - np.diag(d1)
    M = basis.M
    m3 = np.einsum("s,si,sj,sk->ijk", p, n, n, n, optimize=True)
    eye = np.eye(M)
    out = m3.copy()
    out -= eye[:, :, None] * m2[:, None, :]   # i == j
    out -= eye[None, :, :] * m2[:, :, None]   # j == k
    out -= eye[:, None, :] * m2[:, :, None]   # i == k
    idx = np.arange(M)
    out[idx, idx, idx] += 2 * d1
    return out


def position_values(basis: FockBasis) -> np.ndarray:
    """Eigenvalues of x = N^-1 sum_j j n_j on each Fock state (1-based sites)."""
    return basis.occupations @ np.arange(1, basis.M + 1) / basis.N


def center_of_mass(state: np.ndarray, basis: FockBasis) -> float:
    """<x> in site units with the linear (open-chain) position operator."""
    return float(position_values(basis) @ _probabilities(state))


def twist_expectation(state: np.ndarray, basis: FockBasis) -> complex:
    """Z = <exp(2 pi i sum_j j n_j / M)>, well defined on a ring."""
    phase = np.exp(2j * np.pi * (basis.occupations @ np.arange(1, basis.M + 1)) / basis.M)
    return complex(phase @ _probabilities(state))


def twist_center(state: np.ndarray, basis: FockBasis) -> float:
    """Many-body center from arg Z, in sites, defined modulo M/N."""
    z = twist_expectation(state, basis)
    return float(np.angle(z) * basis.M / (2 * np.pi * basis.N))


def circular_center(weights: np.ndarray) -> tuple[float, float]:
    """Circular mean position of nonnegative site weights (1-based), and its resultant length."""
    w = np.asarray(weights, dtype=float)
    M = len(w)
    z = (w * np.exp(2j * np.pi * np.arange(1, M + 1) / M)).sum() / w.sum()
    x = np.angle(z) * M / (2 * np.pi)
    if x <= 0:
        x += M
    return float(x), float(abs(z))


def cluster_center(state: np.ndarray, basis: FockBasis, k: int = 2, periodic: bool = True) -> float:
    """Center of the k-boson cluster weight; circular on a ring, linear otherwise."""
    w = cluster_density(state, basis, k)
    if periodic:
        return circular_center(w)[0]
    return float(np.arange(1, basis.M + 1) @ w / w.sum())


def unwrap_positions(x: Sequence[float], period: float) -> np.ndarray:
    """Shortest-displacement continuity for positions defined modulo ``period``."""
    x = np.asarray(x, dtype=float)
    return np.unwrap(x * (2 * np.pi / period)) * (period / (2 * np.pi))


def principal_shift(shift: float, period: float) -> float:
    """Reduce a displacement to (-period/2, period/2]."""
    r = math.fmod(shift, period)
    if r > period / 2:
        r -= period
    elif r <= -period / 2:
        r += period
    return r


class CurrentOperators:
    """Bond operators a+_j a_{j+1} for one basis, built once and reused."""

    def __init__(self, basis: FockBasis, periodic: bool):
        self.basis = basis
        self.periodic = periodic
        self.bonds = bonds(basis.M, periodic)
        # a+_j a_{j+1}: move a boson from j+1 to j
        self.ops = [hop_operator(basis, k, j) for j, k in self.bonds]

    def expectation(self, state: np.ndarray, J: float) -> np.ndarray:
        """<J_j> = i J <a+_j a_{j+1} - h.c.> = -2 J Im <a+_j a_{j+1}>, indexed by the left site."""
        out = np.zeros(self.basis.M)
        for (j, _), op in zip(self.bonds, self.ops):
            out[j] = -2.0 * J * np.vdot(state, op @ state).imag
        return out


def local_current(state: np.ndarray, spec: ModelSpec, basis: FockBasis,
                  operators: CurrentOperators | None = None) -> np.ndarray:
    """Instantaneous bond currents <J_j> for j = 1..M.

    With the -J hopping sign, a positive value means flow from site j+1 to j.
    The last entry is the wrap bond under periodic boundary, else 0.
    """
    ops = operators or CurrentOperators(basis, spec.periodic)
    return ops.expectation(state, spec.J)


def bond_flow(current: np.ndarray) -> np.ndarray:
    """Particle flow from j to j+1 (the opposite sign of <J_j>)."""
    return -np.asarray(current)


def accumulated_current(currents: np.ndarray, dt: float) -> np.ndarray:
    """Q_j(t) = <J_j(t)> dt, the per-step transported charge."""
    return np.asarray(currents) * dt


def decay_ratio(initial: np.ndarray, H_static, j_pair: int, times: Sequence[float],
                basis: FockBasis | None = None, spectrum=None) -> np.ndarray:
    """r(t) = <n_j>(t) / <n_j>(0) under the static Hamiltonian.

    ``j_pair`` is a 1-based site label.  ``H_static`` may be a
    HamiltonianMatrix, or ``spectrum`` may carry its eigendecomposition
    (energies, vectors) so several states can share one diagonalization.
    """
    if basis is None:
        basis = H_static.basis
    if spectrum is None:
        from .spectral import eigh_dense
        spectrum = eigh_dense(H_static.matrix)
    E, V = spectrum
    c = V.conj().T @ np.asarray(initial, dtype=complex)
    nj = basis.occupations[:, j_pair - 1]
    times = np.asarray(times, dtype=float)
    out = np.empty(len(times))
    for i, t in enumerate(times):
        psi = V @ (np.exp(-1j * E * t) * c)
        out[i] = (np.abs(psi) ** 2) @ nj
    return out / ((np.abs(initial) ** 2 / np.vdot(initial, initial).real) @ nj)


def pair_site(state: np.ndarray, basis: FockBasis) -> int:
    """1-based site with the largest doubly-occupied weight."""
    return int(np.argmax(cluster_density(state, basis, 2))) + 1


def profile_to_csv(path: str | Path, values: np.ndarray, name: str = "density") -> None:
    values = np.asarray(values)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        cols = ["i", "j", "k"][: values.ndim]
        w.writerow(cols + [name])
        for idx in np.ndindex(values.shape):
            w.writerow([i + 1 for i in idx] + [f"{values[idx]:.12g}"])
