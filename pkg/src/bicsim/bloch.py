"""Co-translational symmetry: momentum sectors, block Hamiltonians and Bloch bands.

Translating every boson by one unit cell (q sites) commutes with H on a ring
without disorder.  Each eigenvalue e^{i kappa} of that translation labels a
sector with kappa = 2 pi l / L, L = M / q.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import FockBasis, HamiltonianTerms, ModelSpec, build_basis, translation_permutation
from .spectral import label_from_interaction


@dataclass
class MomentumSector:
    """One translation sector.

    ``reps`` are basis indices of orbit representatives (the lexicographically
    smallest member), ``periods`` their orbit lengths in cells, and
    ``vectors`` the isometry from sector coordinates to the Fock basis.
    ``rep_slot`` maps each representative to its column among all orbits,
    which gives a kappa-independent frame for comparing sectors.
    """

    l: int
    L: int
    reps: np.ndarray
    periods: np.ndarray
    rep_slot: np.ndarray
    vectors: sp.csc_matrix

    @property
    def kappa(self) -> float:
        return 2 * np.pi * self.l / self.L

    @property
    def dim(self) -> int:
        return len(self.reps)

    def lift(self, coeffs: np.ndarray) -> np.ndarray:
        return self.vectors @ coeffs

    def to_orbit_frame(self, coeffs: np.ndarray, n_orbits: int) -> np.ndarray:
        out = np.zeros((n_orbits,) + coeffs.shape[1:], dtype=complex)
        out[self.rep_slot] = coeffs
        return out


@dataclass
class OrbitTable:
    perm: np.ndarray        # T_q as an index permutation
    orbits: np.ndarray      # (L, n_reps): orbits[r, c] = index of T^r |rep_c>
    reps: np.ndarray
    periods: np.ndarray


def orbit_table(basis: FockBasis, q: int) -> OrbitTable:
    M = basis.M
    if M % q:
        raise ValueError(f"q={q} does not divide M={M}")
    L = M // q
    perm = translation_permutation(basis, q)
    powers = np.empty((L, basis.dim), dtype=np.int64)
    powers[0] = np.arange(basis.dim)
    for r in range(1, L):
        powers[r] = perm[powers[r - 1]]
    # descending order: the lexicographic minimum is the largest index
    rep_of = powers.max(axis=0)
    reps = np.flatnonzero(rep_of == np.arange(basis.dim))
    orb = powers[:, reps]
    periods = np.full(len(reps), L)
    for r in range(L - 1, 0, -1):
        periods[orb[r] == orb[0]] = r
    return OrbitTable(perm, orb, reps, periods)


def build_sectors(basis: FockBasis, q: int, periodic: bool = True) -> list[MomentumSector]:
    """Symmetry-adapted bases (1/sqrt(d)) sum_{r<d} e^{-i kappa r} T^r |rep>."""
    if not periodic:
        raise ValueError("momentum sectors need a periodic boundary")
    tab = orbit_table(basis, q)
    L = tab.orbits.shape[0]
    out = []
    for l in range(L):
        kappa = 2 * np.pi * l / L
        ok = (l * tab.periods) % L == 0
        slots = np.flatnonzero(ok)
        rows, cols, vals = [], [], []
        for c, s in enumerate(slots):
            d = tab.periods[s]
            r = np.arange(d)
            rows.append(tab.orbits[:d, s])
            cols.append(np.full(d, c))
            vals.append(np.exp(-1j * kappa * r) / np.sqrt(d))
        B = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(basis.dim, len(slots)),
        )
        out.append(MomentumSector(l, L, tab.reps[slots], tab.periods[slots], slots, B))
    return out


def block_hamiltonian(spec: ModelSpec, sector: MomentumSector, phi: float | None = None,
                      terms: HamiltonianTerms | None = None) -> np.ndarray:
    """Dense Hermitian block of H in one sector."""
    if spec.has_disorder:
        raise ValueError("disorder breaks translation symmetry; no momentum blocks")
    if terms is None:
        terms = HamiltonianTerms(spec, build_basis(spec.M, spec.N))
    B = sector.vectors
    hop = (B.conj().T @ (terms.hopping @ B)).toarray()
    # the interaction is constant on each orbit
    hop[np.diag_indices_from(hop)] += terms.diagonal(phi)[sector.reps]
    return 0.5 * (hop + hop.conj().T)


class SectorSolver:
    """Caches the hopping blocks so that phase sweeps only touch diagonals."""

    def __init__(self, spec: ModelSpec, basis: FockBasis | None = None):
        if not spec.periodic:
            raise ValueError("Bloch bands need a periodic boundary")
        if spec.has_disorder:
            raise ValueError("disorder breaks translation symmetry; no momentum blocks")
        self.spec = spec
        self.basis = basis if basis is not None else build_basis(spec.M, spec.N)
        self.terms = HamiltonianTerms(spec, self.basis)
        self.sectors = build_sectors(self.basis, spec.q)
        self.n_orbits = len(orbit_table(self.basis, spec.q).reps)
        self._hop = [(s.vectors.conj().T @ (self.terms.hopping @ s.vectors)).toarray() for s in self.sectors]
        pairs = 0.5 * (self.basis.occupations * (self.basis.occupations - 1)).sum(axis=1)
        self._pairs = [pairs[s.reps] for s in self.sectors]

    @property
    def L(self) -> int:
        return len(self.sectors)

    def block(self, l: int, phi: float) -> np.ndarray:
        h = self._hop[l].copy()
        h[np.diag_indices_from(h)] += self.terms.diagonal(phi)[self.sectors[l].reps]
        return 0.5 * (h + h.conj().T)

    def solve(self, phi: float) -> "BandStructure":
        energies, coeffs, D = [], [], []
        for l in range(self.L):
            e, v = np.linalg.eigh(self.block(l, phi))
            energies.append(e)
            coeffs.append(v)
            # sector vectors are unit-weight on orbit members that share occupations
            D.append(self._pairs[l] @ np.abs(v) ** 2)
        return BandStructure(self, float(phi), energies, coeffs, D)


@dataclass
class BlochBand:
    index: int
    phi: float
    kappas: np.ndarray
    energies: np.ndarray
    coeffs: list                  # sector coordinates, one vector per kappa
    states: np.ndarray            # (dim, L) full Fock-basis vectors

    @property
    def width(self) -> float:
        return float(self.energies.max() - self.energies.min())


@dataclass
class BandStructure:
    solver: SectorSolver
    phi: float
    energies: list
    coeffs: list
    interaction: list
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.energies)

    def labels(self, l: int) -> np.ndarray:
        return label_from_interaction(self.interaction[l], self.solver.basis.N)

    def class_bands(self, label: str = "type2") -> list[np.ndarray]:
        """Per-kappa eigen-indices of one class, in ascending energy."""
        return [np.flatnonzero(self.labels(l) == label) for l in range(self.L)]

    def n_class_bands(self, label: str = "type2") -> int:
        sizes = {len(ix) for ix in self.class_bands(label)}
        if len(sizes) != 1:
            raise ValueError(f"class {label} has unequal counts across sectors: {sorted(sizes)}")
        return sizes.pop()

    def sector_index(self, m: int, label: str | None = "type2") -> list[int]:
        """Eigen-index per kappa of band ``m`` (energy order within ``label``, negative counts from the top)."""
        if label is None:
            return [m % len(e) for e in self.energies]
        return [int(ix[m]) for ix in self.class_bands(label)]

    def band(self, m: int, label: str | None = "type2") -> BlochBand:
        sel = self.sector_index(m, label)
        sectors = self.solver.sectors
        coeffs = [self.coeffs[l][:, k] for l, k in enumerate(sel)]
        states = np.column_stack([sectors[l].lift(c) for l, c in enumerate(coeffs)])
        E = np.array([self.energies[l][k] for l, k in enumerate(sel)])
        kap = np.array([s.kappa for s in sectors])
        return BlochBand(m, self.phi, kap, E, coeffs, states)

    def gap(self, m: int, label: str | None = "type2") -> float:
        """Smallest distance from band ``m`` to any other eigenvalue in the same sector."""
        sel = self.sector_index(m, label)
        g = np.inf
        for l, k in enumerate(sel):
            e = self.energies[l]
            others = np.delete(e, k)
            g = min(g, float(np.abs(others - e[k]).min()))
        return g

    def all_energies(self) -> np.ndarray:
        return np.sort(np.concatenate(self.energies))


def bands_over_grid(spec: ModelSpec, phi_grid: Sequence[float], solver: SectorSolver | None = None,
                    threads: int = 1) -> list[BandStructure]:
    from .spectral import parallel_map

    solver = solver or SectorSolver(spec)
    return parallel_map(solver.solve, list(phi_grid), threads)


def gapless_flag(structures: Sequence[BandStructure], m: int, label: str | None = "type2",
                 tol: float = 1e-6) -> tuple[bool, float, float]:
    """(gapless?, min gap, phi of the minimum) for band ``m`` over a phase sweep."""
    gaps = [s.gap(m, label) for s in structures]
    k = int(np.argmin(gaps))
    return gaps[k] < tol, float(gaps[k]), structures[k].phi


def align_phase(reference: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Multiply ``vec`` by the phase that makes <reference|vec> real and positive."""
    ov = np.vdot(reference, vec)
    if abs(ov) < 1e-14:
        return vec
    return vec * (abs(ov) / ov)


def stitch_bands(structure: BandStructure, indices: Sequence[int], label: str = "type2") -> np.ndarray:
    """Reorder band labels across kappa by maximal eigenvector overlap.

    Overlaps are taken in the orbit frame (rep coefficients), which is the
    periodic gauge shared by all sectors.  Returns an (L, len(indices)) table
    of per-sector eigen-indices.
    """
    from scipy.optimize import linear_sum_assignment

    n_orb = structure.solver.n_orbits
    sectors = structure.solver.sectors
    cls = structure.class_bands(label)
    table = np.empty((structure.L, len(indices)), dtype=int)
    table[0] = cls[0][list(indices)]
    prev = sectors[0].to_orbit_frame(structure.coeffs[0][:, table[0]], n_orb)
    for l in range(1, structure.L):
        cand = cls[l]
        cur = sectors[l].to_orbit_frame(structure.coeffs[l][:, cand], n_orb)
        ov = np.abs(prev.conj().T @ cur) ** 2
        row, col = linear_sum_assignment(-ov)
        table[l, row] = cand[col]
        prev = sectors[l].to_orbit_frame(structure.coeffs[l][:, table[l]], n_orb)
    return table


def cluster_bands(structure: BandStructure, n_clusters: int, label: str = "type2") -> list[list[int]]:
    """Group class bands into clusters separated by the widest gaps in kappa-averaged energy."""
    nb = structure.n_class_bands(label)
    mean = np.mean([structure.energies[l][ix] for l, ix in enumerate(structure.class_bands(label))], axis=0)
    from .spectral import cluster_split

    groups = cluster_split(mean, n_clusters)
    return [sorted(int(i) for i in g) for g in sorted(groups, key=lambda g: mean[g].mean())] if nb else []


def bands_to_csv(path: str | Path, structures: Sequence[BandStructure]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["phi", "kappa", "band", "energy", "class"])
        for s in structures:
            for l in range(s.L):
                kap = s.solver.sectors[l].kappa
                lab = s.labels(l)
                for b, e in enumerate(s.energies[l]):
                    w.writerow([f"{s.phi:.10g}", f"{kap:.10g}", b, f"{e:.12g}", lab[b]])
