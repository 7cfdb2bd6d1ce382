"""Interaction-modulated Bose-Hubbard chain: parameters, Fock basis, Hamiltonian.

The model is

    H = -J sum_j (a+_{j+1} a_j + h.c.) + 1/2 sum_j U_j(phi) n_j (n_j - 1) + sum_j F V_j n_j

with ``U_j = U0 + delta * cos(2 pi beta j + phi)`` and 1-based site labels
``j = 1..M``.  The wrap-around bond only exists for periodic boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

OPEN = "open"
PERIODIC = "periodic"

DEFAULT_BASIS_CAP = 200_000


def _as_fraction(beta) -> Fraction:
    if isinstance(beta, Fraction):
        return beta
    if isinstance(beta, str):
        return Fraction(beta.strip())
    if isinstance(beta, (tuple, list)):
        p, q = beta
        return Fraction(int(p), int(q))
    if isinstance(beta, float):
        return Fraction(beta).limit_denominator(1000)
    return Fraction(beta)


@dataclass(frozen=True)
class ModelSpec:
    """All parameters of the chain.

    ``beta`` is kept as an exact fraction p/q; ``disorder_profile`` is either
    empty or holds one value in [0, 1) per site.
    """

    M: int
    N: int
    J: float = 1.0
    U0: float = 0.0
    delta: float = 0.0
    beta: Fraction = Fraction(1, 3)
    phi: float = 0.0
    boundary: str = OPEN
    disorder_strength: float = 0.0
    disorder_profile: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "beta", _as_fraction(self.beta))
        object.__setattr__(self, "disorder_profile", tuple(float(v) for v in self.disorder_profile))
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "N", int(self.N))
        self.validate()

    def validate(self) -> None:
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J}")
        if self.boundary not in (OPEN, PERIODIC):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.boundary == PERIODIC and self.M % self.q:
            raise ValueError(
                f"periodic boundary needs q={self.q} to divide M={self.M}"
            )
        prof = self.disorder_profile
        if len(prof) not in (0, self.M):
            raise ValueError(f"disorder_profile must have length 0 or M={self.M}, got {len(prof)}")
        if any(not (0.0 <= v < 1.0) for v in prof):
            raise ValueError("disorder_profile entries must lie in [0, 1)")

    @property
    def p(self) -> int:
        return self.beta.numerator

    @property
    def q(self) -> int:
        return self.beta.denominator

    @property
    def L(self) -> int:
        """Number of unit cells (meaningful for periodic chains)."""
        return self.M // self.q

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def has_disorder(self) -> bool:
        return self.disorder_strength != 0 and len(self.disorder_profile) > 0

    def replace(self, **changes) -> "ModelSpec":
        data = self.to_dict()
        data.update(changes)
        return ModelSpec.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = f"{self.p}/{self.q}"
        d["disorder_profile"] = list(self.disorder_profile)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown ModelSpec fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


# Onsite disorder values used for the robustness runs (12 sites).
DISORDER_FIXTURE = (
    0.8308, 0.5853, 0.5497, 0.9172, 0.2858, 0.7572,
    0.7537, 0.3804, 0.5678, 0.0759, 0.0540, 0.5308,
)

PRESETS: dict[str, ModelSpec] = {
    "fig2": ModelSpec(M=30, N=3, J=1.0, U0=25.0, delta=10.0, beta=Fraction(1, 3),
                      phi=math.pi / 5, boundary=OPEN),
    "fig3": ModelSpec(M=30, N=3, J=1.0, U0=25.0, delta=10.0, beta=Fraction(1, 3),
                      phi=math.pi / 5, boundary=PERIODIC),
    "fig4": ModelSpec(M=12, N=3, J=1.0, U0=90.0, delta=20.0, beta=Fraction(1, 3),
                      phi=0.0, boundary=PERIODIC),
    "fig4_bic": ModelSpec(M=12, N=3, J=1.0, U0=90.0, delta=20.0, beta=Fraction(1, 3),
                          phi=0.0, boundary=OPEN),
    "sm_s2": ModelSpec(M=12, N=3, J=3.0, U0=30.0, delta=2.0, beta=Fraction(1, 3),
                       phi=0.0, boundary=PERIODIC),
    "sm_s4": ModelSpec(M=30, N=2, J=1.0, U0=25.0, delta=10.0, beta=Fraction(1, 3),
                       phi=math.pi / 5, boundary=OPEN),
    "sm_s8": ModelSpec(M=20, N=3, J=1.0, U0=90.0, delta=0.0, beta=Fraction(1, 3),
                       phi=0.0, boundary=OPEN),
    "sm_s11": ModelSpec(M=12, N=4, J=1.0, U0=10.0, delta=2.0, beta=Fraction(1, 3),
                        phi=0.0, boundary=OPEN),
    "sm_s13": ModelSpec(M=12, N=3, J=1.0, U0=90.0, delta=20.0, beta=Fraction(1, 3),
                        phi=0.0, boundary=PERIODIC, disorder_strength=1.0,
                        disorder_profile=DISORDER_FIXTURE),
}
PRESETS["fig4_qbic"] = PRESETS["fig4"]
PRESETS["sm_s15"] = PRESETS["fig4"].replace(N=2)
# strong-coupling point used to compare full-space and type-(ii) subspace dynamics
PRESETS["subspace"] = PRESETS["fig4"].replace(U0=300.0)


def preset(name: str) -> ModelSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None


def interaction_profile(spec: ModelSpec, phi: float | None = None) -> np.ndarray:
    """U_j for j = 1..M (disorder is an onsite energy and is not included)."""
    if phi is None:
        phi = spec.phi
    j = np.arange(1, spec.M + 1)
    return spec.U0 + spec.delta * np.cos(2 * np.pi * float(spec.beta) * j + phi)


def disorder_potential(spec: ModelSpec) -> np.ndarray:
    if not spec.has_disorder:
        return np.zeros(spec.M)
    return spec.disorder_strength * np.asarray(spec.disorder_profile)


def random_disorder_profile(M: int, seed: int) -> tuple[float, ...]:
    rng = np.random.default_rng(seed)
    return tuple(float(v) for v in rng.random(M))


# --------------------------------------------------------------------------
# Fock basis


@lru_cache(maxsize=64)
def _compositions(M: int, N: int) -> np.ndarray:
    # descending lexicographic order of occupation vectors
    if M == 1:
        return np.array([[N]], dtype=np.uint8)
    blocks = []
    for first in range(N, -1, -1):
        rest = _compositions(M - 1, N - first)
        head = np.full((len(rest), 1), first, dtype=np.uint8)
        blocks.append(np.hstack([head, rest]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def _row_keys(states: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(states, dtype=np.uint8)
    return a.view(np.dtype((np.void, a.shape[1]))).ravel()


class FockBasis:
    """Ordered set of occupation vectors with a reverse index.

    States are stored as rows of a ``(dim, M)`` uint8 array in descending
    lexicographic order.  ``parent`` maps each row to its position in the
    full basis when this basis is a restriction of it.
    """

    def __init__(self, states: np.ndarray, parent: np.ndarray | None = None):
        states = np.asarray(states, dtype=np.uint8)
        if states.ndim != 2:
            raise ValueError("states must be a 2D array")
        self.states = states
        self.states.setflags(write=False)
        self.parent = parent
        self._keys_asc = _row_keys(states[::-1])
        self._index: dict[tuple[int, ...], int] | None = None

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def M(self) -> int:
        return self.states.shape[1]

    @property
    def N(self) -> int:
        return int(self.states[0].sum()) if self.dim else 0

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, k: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.states[k])

    @property
    def occupations(self) -> np.ndarray:
        return self.states.astype(float)

    def index(self, state: Sequence[int]) -> int:
        if self._index is None:
            self._index = {tuple(int(v) for v in s): k for k, s in enumerate(self.states)}
        return self._index[tuple(int(v) for v in state)]

    def lookup(self, states: np.ndarray) -> np.ndarray:
        """Vectorised reverse index; rows not in the basis map to -1."""
        states = np.atleast_2d(np.asarray(states, dtype=np.uint8))
        keys = _row_keys(states)
        pos = np.searchsorted(self._keys_asc, keys)
        pos_c = np.minimum(pos, self.dim - 1)
        found = self._keys_asc[pos_c] == keys
        out = self.dim - 1 - pos_c
        out[~found] = -1
        return out

    def restrict(self, mask: np.ndarray) -> "FockBasis":
        mask = np.asarray(mask, dtype=bool)
        parent = np.flatnonzero(mask)
        if self.parent is not None:
            parent = self.parent[parent]
        return FockBasis(self.states[mask], parent=parent)

    def fock_vector(self, state: Sequence[int]) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(state)] = 1.0
        return v


def basis_dimension(M: int, N: int) -> int:
    return math.comb(M + N - 1, N)


def build_basis(M: int, N: int, cap: int = DEFAULT_BASIS_CAP) -> FockBasis:
    if M < 1 or N < 0:
        raise ValueError(f"need M >= 1 and N >= 0, got M={M}, N={N}")
    dim = basis_dimension(M, N)
    if dim > cap:
        raise OverflowError(f"basis dimension C({M + N - 1},{N}) = {dim} exceeds cap {cap}")
    return FockBasis(_compositions(M, N))


def type2_subspace_basis(M: int) -> FockBasis:
    """Three-boson states with one doubly occupied site and one singly occupied site."""
    full = build_basis(M, 3)
    st = full.states
    mask = ((st == 2).sum(axis=1) == 1) & ((st == 1).sum(axis=1) == 1)
    return full.restrict(mask)


def embed(vector: np.ndarray, sub: FockBasis, full_dim: int) -> np.ndarray:
    if sub.parent is None:
        raise ValueError("basis has no parent embedding")
    out = np.zeros(full_dim, dtype=np.result_type(vector, complex))
    out[sub.parent] = vector
    return out


def project(vector: np.ndarray, sub: FockBasis) -> tuple[np.ndarray, float]:
    """Restrict a full-basis vector to ``sub``; returns (normalised part, residual norm)."""
    if sub.parent is None:
        raise ValueError("basis has no parent embedding")
    inside = np.asarray(vector)[sub.parent]
    norm_in = np.linalg.norm(inside)
    residual = math.sqrt(max(np.linalg.norm(vector) ** 2 - norm_in ** 2, 0.0))
    return inside / norm_in, residual


def translation_permutation(basis: FockBasis, shift: int) -> np.ndarray:
    """Indices ``perm`` with T|s_k> = |s_perm[k]>, T moving every boson by ``shift`` sites."""
    moved = np.roll(basis.states, shift, axis=1)
    perm = basis.lookup(moved)
    if np.any(perm < 0):
        raise ValueError("basis is not closed under the translation")
    return perm


def translate(vector: np.ndarray, basis: FockBasis, shift: int) -> np.ndarray:
    perm = translation_permutation(basis, shift)
    out = np.zeros_like(vector)
    out[perm] = vector
    return out


# --------------------------------------------------------------------------
# Hamiltonian


def bonds(M: int, periodic: bool) -> list[tuple[int, int]]:
    out = [(i, i + 1) for i in range(M - 1)]
    if periodic and M > 2:
        out.append((M - 1, 0))
    return out


def hop_operator(basis: FockBasis, i: int, k: int) -> sp.csr_matrix:
    """Matrix of a+_k a_i (move one boson from site i to site k), 0-based sites.

    Target states outside the basis are dropped, i.e. this is P a+_k a_i P.
    """
    st = basis.states
    src = np.flatnonzero(st[:, i] > 0)
    new = st[src].astype(np.int16)
    amp = np.sqrt(new[:, i] * (new[:, k] + 1.0))
    new[:, i] -= 1
    new[:, k] += 1
    keep = new.max(axis=1) < 256
    tgt = np.full(len(src), -1)
    tgt[keep] = basis.lookup(new[keep].astype(np.uint8))
    ok = tgt >= 0
    return sp.csr_matrix((amp[ok], (tgt[ok], src[ok])), shape=(basis.dim, basis.dim))


class HamiltonianTerms:
    """Phase-independent pieces of H on one basis.

    ``H(phi) = hopping + diag(pairs @ U(phi) + occ @ onsite)``; rebuilding only
    the diagonal makes phase sweeps and time stepping cheap.
    """

    def __init__(self, spec: ModelSpec, basis: FockBasis, extra_onsite: np.ndarray | None = None):
        if basis.M != spec.M:
            raise ValueError(f"basis has M={basis.M}, spec has M={spec.M}")
        self.spec = spec
        self.basis = basis
        occ = basis.occupations
        self.occ = occ
        self.pairs = 0.5 * occ * (occ - 1)
        hop = sp.csr_matrix((basis.dim, basis.dim))
        for i, k in bonds(spec.M, spec.periodic):
            forward = hop_operator(basis, i, k)
            hop = hop + forward + forward.T
        self.hopping = (-spec.J * hop).tocsr()
        self.hopping.sum_duplicates()
        onsite = disorder_potential(spec)
        if extra_onsite is not None:
            onsite = onsite + np.asarray(extra_onsite, dtype=float)
        self.onsite = onsite
        self._static_diag = occ @ onsite

    def diagonal(self, phi: float | None = None) -> np.ndarray:
        return self.pairs @ interaction_profile(self.spec, phi) + self._static_diag

    def matrix(self, phi: float | None = None) -> sp.csr_matrix:
        return (self.hopping + sp.diags(self.diagonal(phi))).tocsr()

    def dense(self, phi: float | None = None) -> np.ndarray:
        H = self.hopping.toarray()
        H[np.diag_indices_from(H)] += self.diagonal(phi)
        return H


@dataclass
class HamiltonianMatrix:
    """Sparse Hamiltonian together with the parameters it was built from.

    Entries are real: the model carries no gauge flux, so real symmetric is
    the Hermitian case here.
    """

    matrix: sp.csr_matrix
    spec: ModelSpec
    phi: float
    basis: FockBasis

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0


def build_hamiltonian(spec: ModelSpec, basis: FockBasis | None = None,
                      phi: float | None = None,
                      extra_onsite: np.ndarray | None = None) -> HamiltonianMatrix:
    spec.validate()
    if basis is None:
        basis = build_basis(spec.M, spec.N)
    if basis.N != spec.N:
        raise ValueError(f"basis holds N={basis.N} bosons, spec has N={spec.N}")
    if phi is None:
        phi = spec.phi
    terms = HamiltonianTerms(spec, basis, extra_onsite=extra_onsite)
    return HamiltonianMatrix(terms.matrix(phi), spec, float(phi), basis)


def number_operator(basis: FockBasis) -> sp.csr_matrix:
    return sp.diags(basis.occupations.sum(axis=1)).tocsr()


def site_labels(M: int) -> np.ndarray:
    return np.arange(1, M + 1)


def parse_sites(values: Iterable[int]) -> list[int]:
    """Convert 1-based site labels to 0-based indices."""
    return [int(v) - 1 for v in values]
