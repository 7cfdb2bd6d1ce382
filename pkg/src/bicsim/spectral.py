"""Diagonalization, state classification and localization metrics."""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .lattice import FockBasis, HamiltonianMatrix, ModelSpec

DEFAULT_DENSE_CAP = 6000
CLASS_THRESHOLD = 0.4
UNCLASSIFIED = "unclassified"


class DimensionError(RuntimeError):
    """Raised when a dense eigensolve would exceed the configured cap."""


@dataclass
class SpectralResult:
    energies: np.ndarray
    eigenvectors: np.ndarray
    basis: FockBasis
    spec: ModelSpec | None = None
    phi: float | None = None
    labels: np.ndarray | None = None
    interaction: np.ndarray | None = None
    g2: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.energies)

    def state(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, k]

    def nearest(self, energy: float, mask: np.ndarray | None = None) -> int:
        """Index of the eigenvalue closest to ``energy`` (optionally within a mask)."""
        gap = np.abs(self.energies - energy)
        if mask is not None:
            gap = np.where(mask, gap, np.inf)
        return int(np.argmin(gap))

    def indices(self, label: str) -> np.ndarray:
        if self.labels is None:
            raise ValueError("result is not classified")
        return np.flatnonzero(self.labels == label)

    def counts(self) -> dict[str, int]:
        if self.labels is None:
            raise ValueError("result is not classified")
        names, n = np.unique(self.labels, return_counts=True)
        return {str(a): int(b) for a, b in zip(names, n)}

    def orthonormality_error(self) -> float:
        V = self.eigenvectors
        G = V.conj().T @ V
        return float(np.abs(G - np.eye(G.shape[0])).max())

    def residuals(self, H: HamiltonianMatrix) -> np.ndarray:
        HV = H.matrix @ self.eigenvectors
        return np.linalg.norm(HV - self.eigenvectors * self.energies, axis=0)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "energy", "class", "D", "G2"])
            for k, e in enumerate(self.energies):
                w.writerow([
                    k, f"{e:.12g}",
                    self.labels[k] if self.labels is not None else "",
                    f"{self.interaction[k]:.10g}" if self.interaction is not None else "",
                    f"{self.g2[k]:.10g}" if self.g2 is not None else "",
                ])


def cache_key(spec: ModelSpec, phi: float | None = None) -> str:
    phi = spec.phi if phi is None else phi
    text = spec.to_json() + f"|phi={float(phi)!r}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_cache(result: SpectralResult, directory: str | Path) -> Path:
    if result.spec is None:
        raise ValueError("result has no spec to key the cache")
    path = Path(directory) / f"spectrum_{cache_key(result.spec, result.phi)}.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, energies=result.energies, eigenvectors=result.eigenvectors)
    return path


def load_cache(spec: ModelSpec, basis: FockBasis, directory: str | Path,
               phi: float | None = None) -> SpectralResult | None:
    path = Path(directory) / f"spectrum_{cache_key(spec, phi)}.npz"
    if not path.exists():
        return None
    with np.load(path) as data:
        return SpectralResult(data["energies"], data["eigenvectors"], basis, spec,
                              spec.phi if phi is None else phi)


def eigh_dense(matrix) -> tuple[np.ndarray, np.ndarray]:
    A = matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix)
    return sla.eigh(A, driver="evd")


def diagonalize(H: HamiltonianMatrix, dense_cap: int = DEFAULT_DENSE_CAP,
                window: tuple[float, int] | None = None) -> SpectralResult:
    """Eigendecomposition of ``H``.

    Dense by default.  ``window=(sigma, k)`` switches to a shift-invert Lanczos
    solve returning the ``k`` eigenpairs closest to ``sigma``; this is the only
    route above ``dense_cap``.
    """
    dim = H.dimension
    if window is None:
        if dim > dense_cap:
            raise DimensionError(
                f"dimension {dim} exceeds dense cap {dense_cap}; use a momentum sector, "
                "the type-(ii) subspace, or pass window=(sigma, k)"
            )
        E, V = eigh_dense(H.matrix)
    else:
        sigma, k = window
        k = min(int(k), dim - 2)
        E, V = spla.eigsh(H.matrix.tocsc(), k=k, sigma=sigma, which="LM", tol=1e-12)
        order = np.argsort(E)
        E, V = E[order], V[:, order]
    return SpectralResult(E, V, H.basis, H.spec, H.phi, meta={"window": window})


def interaction_expectation(states: np.ndarray, basis: FockBasis) -> np.ndarray:
    """D = <sum_j n_j (n_j - 1) / 2> for each column (or a single vector)."""
    occ = basis.occupations
    pairs = 0.5 * (occ * (occ - 1)).sum(axis=1)
    prob = np.abs(states) ** 2
    return pairs @ prob


def class_ladder(N: int) -> np.ndarray:
    k = np.arange(1, N + 1)
    return k * (k - 1) / 2


def label_from_interaction(D: np.ndarray, N: int, threshold: float = CLASS_THRESHOLD) -> np.ndarray:
    """Assign ``type{k}`` where ``D`` is nearest to k(k-1)/2; far values are unclassified.

    For N=3 the ladder is 0, 1, 3, i.e. three free bosons, one pair plus one
    boson, and a bound trimer.
    """
    D = np.atleast_1d(np.asarray(D, dtype=float))
    ladder = class_ladder(N)
    dist = np.abs(D[:, None] - ladder[None, :])
    k = np.argmin(dist, axis=1)
    labels = np.array([f"type{i + 1}" for i in k], dtype=object)
    labels[dist[np.arange(len(D)), k] > threshold] = UNCLASSIFIED
    return labels


def classify_states(result: SpectralResult, basis: FockBasis | None = None,
                    threshold: float = CLASS_THRESHOLD) -> np.ndarray:
    basis = basis or result.basis
    D = interaction_expectation(result.eigenvectors, basis)
    result.interaction = D
    result.labels = label_from_interaction(D, basis.N, threshold)
    result.g2 = generalized_ipr(result.eigenvectors, basis)
    return result.labels


def generalized_ipr(state: np.ndarray, basis: FockBasis) -> np.ndarray | float:
    """G2 = sum_j <n_j>^2 / (sum_j <n_j>)^2; vectorised over columns."""
    prob = np.abs(np.asarray(state)) ** 2
    norm = prob.sum(axis=0)
    if np.any(norm <= 1e-300):
        raise ValueError("zero-norm state")
    dens = basis.occupations.T @ (prob / norm)
    g = (dens ** 2).sum(axis=0) / dens.sum(axis=0) ** 2
    return float(g) if np.ndim(g) == 0 else g


def average_g2_type2(result: SpectralResult, normalization: str = "count") -> float:
    """Mean G2 over type-(ii) states.

    ``normalization="count"`` divides by the number of type-(ii) states;
    ``"formula"`` divides by 3*beta*M*(M-1), which is the same at beta = 1/3.
    """
    if result.labels is None:
        classify_states(result)
    idx = result.indices("type2")
    if len(idx) == 0:
        raise ValueError("no type-(ii) states in this spectrum")
    total = float(result.g2[idx].sum())
    if normalization == "count":
        return total / len(idx)
    if normalization == "formula":
        if result.spec is None:
            raise ValueError("formula normalization needs the model spec")
        M = result.spec.M
        return total / (3 * float(result.spec.beta) * M * (M - 1))
    raise ValueError(f"unknown normalization {normalization!r}")


def cluster_split(energies: np.ndarray, n_clusters: int) -> list[np.ndarray]:
    """Split sorted energies into groups at the ``n_clusters - 1`` widest gaps."""
    energies = np.asarray(energies)
    order = np.argsort(energies)
    gaps = np.diff(energies[order])
    cuts = np.sort(np.argsort(gaps)[::-1][: n_clusters - 1]) + 1
    return [order[a:b] for a, b in zip(np.r_[0, cuts], np.r_[cuts, len(order)])]


def bic_candidates(result: SpectralResult, label: str = "type2",
                   g2_threshold: float | None = None) -> np.ndarray:
    """Indices of localized states in one class.

    A pair pinned on one site gives G2 >= (N-1)^2/N^2 on its own, so half of
    that is the default cut between pinned and extended states.
    """
    if result.labels is None:
        classify_states(result)
    N = result.basis.N
    if g2_threshold is None:
        g2_threshold = 0.5 * (N - 1) ** 2 / N ** 2
    idx = result.indices(label)
    return idx[result.g2[idx] > g2_threshold]


def parallel_map(fn: Callable, items: Iterable, threads: int = 1) -> list:
    """Order-preserving map over independent jobs."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def spectrum_sweep(build: Callable[[float], HamiltonianMatrix], values: Sequence[float],
                   threads: int = 1, dense_cap: int = DEFAULT_DENSE_CAP) -> list[SpectralResult]:
    def job(v):
        res = diagonalize(build(v), dense_cap=dense_cap)
        classify_states(res)
        return res
    return parallel_map(job, values, threads)


def trace_identity_error(H: HamiltonianMatrix, result: SpectralResult) -> float:
    tr = float(H.matrix.diagonal().sum())
    return abs(result.energies.sum() - tr) / max(1.0, abs(tr))


def uniform_g2(M: int) -> float:
    return 1.0 / M
