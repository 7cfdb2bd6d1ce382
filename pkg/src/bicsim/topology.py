"""Chern numbers on the (kappa, phi) torus by lattice field strengths."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bloch import BandStructure, SectorSolver, bands_over_grid
from .lattice import ModelSpec


class GaplessError(RuntimeError):
    pass


@dataclass
class ChernResult:
    bands: tuple[int, ...]
    chern: int
    raw: float
    curvature: np.ndarray       # (L, n_phi) plaquette field strengths / 2pi
    min_gap: float
    gap_phi: float

    def to_json(self) -> str:
        return json.dumps({"bands": list(self.bands), "chern": self.chern, "raw": self.raw,
                           "min_gap": self.min_gap, "gap_phi": self.gap_phi})

    def curvature_csv(self, path: str | Path) -> None:
        L, n = self.curvature.shape
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["kappa_index", "phi_index", "F"])
            for a in range(L):
                for b in range(n):
                    w.writerow([a, b, f"{self.curvature[a, b]:.12g}"])


def _frames(structures: Sequence[BandStructure], bands: Sequence[int], label: str | None) -> list[list[np.ndarray]]:
    """frames[i][l]: (n_orbits, n_bands) orbit-frame eigenvectors at phi_i, kappa_l."""
    out = []
    for s in structures:
        sol = s.solver
        row = []
        for l in range(s.L):
            if label is None:
                n = len(s.energies[l])
                if any(not -n <= b < n for b in bands):
                    raise ValueError(f"band index out of range for sector {l} of dimension {n}")
                idx = [b % n for b in bands]
            else:
                cls = s.class_bands(label)[l]
                idx = [int(cls[b]) for b in bands]
            row.append(sol.sectors[l].to_orbit_frame(s.coeffs[l][:, idx], sol.n_orbits))
        out.append(row)
    return out


def _link(a: np.ndarray, b: np.ndarray) -> complex:
    d = np.linalg.det(a.conj().T @ b)
    return d / abs(d) if abs(d) > 1e-14 else 1.0


def field_strength(structures: Sequence[BandStructure], bands: Sequence[int],
                   label: str | None = "type2") -> np.ndarray:
    """Plaquette field strengths F(kappa_l, phi_i) / 2pi on the periodic grid.

    Multi-band selections use determinant links (non-Abelian total).
    Sector l has T_q eigenvalue e^{i kappa_l}; since T_q moves bosons forward,
    the crystal momentum k with psi(x + q) = e^{ik} psi(x) is -kappa_l.  The
    plaquettes are oriented along (k, phi), hence the overall minus sign.
    """
    fr = _frames(structures, bands, label)
    n_phi = len(fr)
    L = len(fr[0])
    F = np.empty((L, n_phi))
    for i in range(n_phi):
        i1 = (i + 1) % n_phi
        for l in range(L):
            l1 = (l + 1) % L
            u1 = _link(fr[i][l], fr[i][l1])
            u2 = _link(fr[i][l1], fr[i1][l1])
            u3 = _link(fr[i1][l1], fr[i1][l])
            u4 = _link(fr[i1][l], fr[i][l])
            F[l, i] = -np.angle(u1 * u2 * u3 * u4) / (2 * np.pi)
    return F


def uniform_phi_grid(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def chern_number(spec: ModelSpec, bands: int | Sequence[int] = -1, n_phi: int = 60,
                 label: str | None = "type2", structures: Sequence[BandStructure] | None = None,
                 gap_tol: float = 1e-6, solver: SectorSolver | None = None,
                 threads: int = 1) -> ChernResult:
    """Chern number of one band (or the non-Abelian total of several).

    ``bands`` index the energy-ordered members of ``label`` in every sector;
    negative values count from the top.  Refuses when the selection touches a
    band outside it anywhere on the grid.
    """
    sel = (bands,) if isinstance(bands, (int, np.integer)) else tuple(bands)
    if structures is None:
        structures = bands_over_grid(spec, uniform_phi_grid(n_phi), solver=solver, threads=threads)
    gap, gphi = _selection_gap(structures, sel, label)
    if gap < gap_tol:
        raise GaplessError(f"bands {sel} close their gap ({gap:.3g}) at phi={gphi:.4f}")
    F = field_strength(structures, sel, label)
    raw = float(F.sum())
    return ChernResult(sel, int(round(raw)), raw, F, gap, gphi)


def _selection_gap(structures, sel, label) -> tuple[float, float]:
    best, where = np.inf, 0.0
    for s in structures:
        for l in range(s.L):
            e = s.energies[l]
            if label is None:
                if any(not -len(e) <= b < len(e) for b in sel):
                    raise ValueError(f"band index out of range for sector {l} of dimension {len(e)}")
                idx = sorted(b % len(e) for b in sel)
            else:
                cls = s.class_bands(label)[l]
                idx = sorted(int(cls[b]) for b in sel)
            lo, hi = idx[0], idx[-1]
            g = np.inf
            if lo > 0:
                g = min(g, e[lo] - e[lo - 1])
            if hi < len(e) - 1:
                g = min(g, e[hi + 1] - e[hi])
            if g < best:
                best, where = g, s.phi
    return float(best), float(where)


def predicted_displacement(C: int, q: int) -> int:
    """Sites moved per pump cycle by a filled band with Chern number C."""
    return int(C) * int(q)
