"""Multiparticle maximally localized Wannier states from the projected position operator."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from .bloch import BlochBand
from .lattice import FockBasis
from .observables import position_values

DEGENERACY_TOL = 1e-6


@dataclass
class WannierSet:
    bands: tuple[int, ...]
    states: np.ndarray          # (dim, L * n_bands), columns sorted by center
    centers: np.ndarray         # site units
    basis: FockBasis
    manifold: np.ndarray        # orthonormal Bloch states spanning the selection
    flags: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.states.shape[1]

    def state(self, k: int) -> np.ndarray:
        return self.states[:, k]

    def nearest(self, site: float) -> int:
        """Index of the Wannier state whose center is closest to ``site``."""
        return int(np.argmin(np.abs(self.centers - site)))

    def projector_residual(self) -> float:
        P = self.manifold @ self.manifold.conj().T
        return float(np.abs(P @ self.states - self.states).max())

    def to_csv(self, path: str | Path, k: int) -> None:
        v = self.states[:, k]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["basis_index", "re", "im"])
            for i in np.flatnonzero(np.abs(v) > 1e-14):
                w.writerow([i, f"{v[i].real:.15g}", f"{v[i].imag:.15g}"])

    def sidecar(self) -> dict:
        return {"bands": list(self.bands), "centers": [float(c) for c in self.centers],
                "flags": self.flags}

    def export(self, directory: str | Path, stem: str = "wannier") -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in range(len(self)):
            p = d / f"{stem}_{k}.csv"
            self.to_csv(p, k)
            paths.append(p)
        js = d / f"{stem}.json"
        js.write_text(json.dumps(self.sidecar(), indent=2))
        return paths + [js]


def band_manifold(bands: BlochBand | Sequence[BlochBand]) -> tuple[np.ndarray, tuple[int, ...]]:
    if isinstance(bands, BlochBand):
        bands = [bands]
    if not bands:
        raise ValueError("empty band selection")
    S = np.hstack([b.states for b in bands])
    return S, tuple(b.index for b in bands)


def projected_position(bands, basis: FockBasis) -> np.ndarray:
    """P x P in the Bloch-state frame of the selected bands."""
    S, _ = band_manifold(bands)
    x = position_values(basis)
    X = S.conj().T @ (x[:, None] * S)
    return 0.5 * (X + X.conj().T)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    return v * (abs(v[k]) / v[k])


def mlws(bands, basis: FockBasis, hamiltonian=None) -> WannierSet:
    """Eigenstates of the projected position operator, sorted by center.

    Each state gets a deterministic global phase (largest amplitude real
    positive).  Near-degenerate centers are flagged and, when a Hamiltonian is
    given, reordered by energy expectation.
    """
    S, idx = band_manifold(bands)
    X = projected_position(bands, basis)
    centers, w = np.linalg.eigh(X)
    W = S @ w
    flags = []
    close = np.flatnonzero(np.diff(centers) < DEGENERACY_TOL)
    if len(close):
        flags.append(f"near-degenerate centers at positions {close.tolist()}")
        if hamiltonian is not None:
            energy = np.real(np.einsum("ij,ij->j", W.conj(), hamiltonian @ W))
            order = np.lexsort((energy, np.round(centers / DEGENERACY_TOL)))
            centers, W = centers[order], W[:, order]
    W = np.column_stack([_fix_phase(W[:, k]) for k in range(W.shape[1])])
    return WannierSet(idx, W, centers, basis, S, flags)


def spread_functional(wset: WannierSet | np.ndarray, basis: FockBasis | None = None) -> tuple[float, float, float]:
    """(Omega, Omega_I, Omega_V) of a set of orthonormal states.

    Omega sums the position variances; Omega_V collects the off-diagonal
    position elements inside the manifold and vanishes for the MLWS.
    """
    if isinstance(wset, WannierSet):
        W, basis = wset.states, wset.basis
    else:
        W = np.asarray(wset)
    x = position_values(basis)
    prob = np.abs(W) ** 2
    X = W.conj().T @ (x[:, None] * W)
    omega = float((prob.T @ x ** 2).sum() - (np.real(np.diag(X)) ** 2).sum())
    off = X - np.diag(np.diag(X))
    omega_v = float((np.abs(off) ** 2).sum())
    return omega, omega - omega_v, omega_v


def random_remix(states: np.ndarray, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Apply a Haar-random unitary within the span of ``states``."""
    n = states.shape[1]
    U = unitary_group.rvs(n, random_state=rng) if n > 1 else np.exp(2j * np.pi * np.random.default_rng(rng).random()) * np.eye(1)
    return states @ U


def twist_centers(bands, basis: FockBasis) -> np.ndarray:
    """Centers from eigenphases of the projected twist exp(2 pi i N x / M), in sites.

    Defined modulo M/N sites; reported for comparison with the linear operator.
    """
    S, _ = band_manifold(bands)
    phase = np.exp(2j * np.pi * basis.N * position_values(basis) / basis.M)
    Z = S.conj().T @ (phase[:, None] * S)
    ev = np.linalg.eigvals(Z)
    c = np.angle(ev) * basis.M / (2 * np.pi * basis.N)
    return np.sort(np.mod(c, basis.M / basis.N))
