"""Time evolution: adiabatic pumping, static runs and subspace fast paths.

Each step freezes H at the midpoint phase phi(t + dt/2) = phi0 + omega (t + dt/2)
and applies exp(-i H dt) exactly, through a Chebyshev expansion with Bessel
coefficients (converged to double precision) or a dense eigendecomposition.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.special as sps
from scipy.signal import find_peaks
from scipy.ndimage import uniform_filter1d
from numba import njit

from .lattice import (FockBasis, HamiltonianTerms, ModelSpec, build_basis, project,
                      type2_subspace_basis)
from .observables import CurrentOperators, principal_shift

FULL = "full"
TYPE2 = "type2_subspace"
TYPE2_DRESSED = "type2_dressed"
SUBSPACE_RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class PumpSchedule:
    """phi(t) = phi0 + omega t over ``cycles`` periods, stepped by ``dt``.

    ``omega = 0`` is a static run lasting ``duration``.  By default dt must
    satisfy dt <= 0.1/J and dt <= T/1000; ``strict=False`` lifts the first
    bound for very slow drives (the exponential step is exact for frozen H).
    """

    omega: float
    cycles: float = 1.0
    dt: float = 0.1
    phi0: float = 0.0
    duration: float | None = None
    J: float = 1.0
    strict: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.omega == 0:
            if self.duration is None or self.duration < 0:
                raise ValueError("a static schedule needs a nonnegative duration")
            return
        if self.strict and self.dt > 0.1 / self.J + 1e-12:
            raise ValueError(f"dt={self.dt} exceeds 0.1/J={0.1 / self.J}")
        if self.dt > self.period / 1000 + 1e-12:
            raise ValueError(f"dt={self.dt} exceeds T/1000={self.period / 1000}")

    @property
    def period(self) -> float:
        return 2 * np.pi / abs(self.omega) if self.omega else math.inf

    @property
    def total_time(self) -> float:
        return self.duration if self.omega == 0 else self.cycles * self.period

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.total_time / self.dt)))

    @property
    def step(self) -> float:
        """Actual step, adjusted so that n_steps * step equals the total time."""
        return self.total_time / self.n_steps

    def phase(self, t):
        return self.phi0 + self.omega * np.asarray(t)


@dataclass
class Trajectory:
    times: np.ndarray
    densities: np.ndarray           # (n_samples, M)
    pair_densities: np.ndarray      # (n_samples, M), <n_j (n_j - 1) / 2>
    currents: np.ndarray            # (n_samples, M), instantaneous <J_j>
    norms: np.ndarray
    com_linear: np.ndarray          # sites
    twist_center: np.ndarray        # sites, unwrapped step by step
    pair_center: np.ndarray         # sites, unwrapped step by step (circular on rings)
    snapshots: np.ndarray           # (n_snap, dim)
    snapshot_times: np.ndarray
    basis: FockBasis
    spec: ModelSpec
    schedule: PumpSchedule
    space: str = FULL
    meta: dict = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def initial_state(self) -> np.ndarray:
        return self.snapshots[0]

    def pair_sites(self) -> np.ndarray:
        return np.argmax(self.pair_densities, axis=1) + 1

    def to_csv(self, path: str | Path, what: str = "densities") -> None:
        data = getattr(self, what)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "site", "value"])
            for t, row in zip(self.times, data):
                for j, v in enumerate(row):
                    w.writerow([f"{t:.10g}", j + 1, f"{v:.10g}"])


@njit(cache=True)
def _chebyshev_kernel(indptr, indices, data, shift, inv_r, coef, psi):
    """sum_k coef[k] T_k(Ht) psi with Ht = (hop / r) + diag(shift)."""
    n = psi.shape[0]
    t0 = psi.copy()
    t1 = np.empty_like(psi)
    for i in range(n):
        acc = shift[i] * psi[i]
        for p in range(indptr[i], indptr[i + 1]):
            acc += inv_r * data[p] * psi[indices[p]]
        t1[i] = acc
    out = coef[0] * t0 + coef[1] * t1
    t2 = np.empty_like(psi)
    for k in range(2, coef.shape[0]):
        for i in range(n):
            acc = shift[i] * t1[i]
            for p in range(indptr[i], indptr[i + 1]):
                acc += inv_r * data[p] * t1[indices[p]]
            t2[i] = 2.0 * acc - t0[i]
        ck = coef[k]
        for i in range(n):
            out[i] += ck * t2[i]
        t0, t1, t2 = t1, t2, t0
    return out


@lru_cache(maxsize=128)
def _coefficients(rho: float) -> np.ndarray:
    """Chebyshev coefficients of exp(-i rho x) on [-1, 1], truncated below 1e-17."""
    K = int(rho + 20)
    while abs(sps.jv(K, rho)) > 1e-17 and K < 2000:
        K += 5
    k = np.arange(K)
    c = sps.jv(k, rho) * 2 * (-1j) ** k
    c[0] /= 2
    return c


class Propagator:
    """exp(-i H(phi) dt) on a fixed basis, rebuilding only the diagonal per step."""

    def __init__(self, terms: HamiltonianTerms, method: str = "chebyshev"):
        if method not in ("chebyshev", "eigh"):
            raise ValueError(f"unknown method {method!r}")
        self.terms = terms
        self.method = method
        self.hop = terms.hopping.tocsr()
        self.hop_bound = np.asarray(abs(self.hop).sum(axis=1)).ravel()
        self._hop_dense = self.hop.toarray() if method == "eigh" else None

    def apply(self, psi: np.ndarray, phi: float, dt: float) -> np.ndarray:
        dg = self.terms.diagonal(phi)
        if self.method == "eigh":
            H = self._hop_dense.copy()
            H[np.diag_indices_from(H)] += dg
            E, V = np.linalg.eigh(H)
            return V @ (np.exp(-1j * E * dt) * (V.conj().T @ psi))
        lo = float((dg - self.hop_bound).min())
        hi = float((dg + self.hop_bound).max())
        c = 0.5 * (hi + lo)
        # round the half-width up onto a 1% grid so the coefficients are reused
        r = 1.01 ** math.ceil(math.log(0.5 * (hi - lo) + 1e-9) / math.log(1.01))
        coef = _coefficients(r * dt)
        hop = self.hop
        out = _chebyshev_kernel(hop.indptr, hop.indices, hop.data, (dg - c) / r, 1.0 / r,
                                coef, np.ascontiguousarray(psi, dtype=np.complex128))
        return np.exp(-1j * c * dt) * out


class DressedPropagator:
    """Type-(ii) subspace dynamics with second-order virtual hopping folded in.

    H_P + (W V_QP + V_PQ W^T) / 2 with W_ac = V_ac / (E_a - E_c), where V is
    the hopping and E the interaction plus onsite energies at the current
    phase.  This restores the O(J^2/U) shifts that plain projection drops.
    """

    def __init__(self, spec: ModelSpec, sub: FockBasis, extra_onsite: np.ndarray | None = None):
        if sub.parent is None:
            raise ValueError("dressed dynamics needs a subspace basis with a parent embedding")
        full = build_basis(spec.M, spec.N)
        self.full_terms = HamiltonianTerms(spec, full, extra_onsite=extra_onsite)
        self.terms = HamiltonianTerms(spec, sub, extra_onsite=extra_onsite)
        P = np.asarray(sub.parent)
        inside = np.zeros(full.dim, dtype=bool)
        inside[P] = True
        Q = np.flatnonzero(~inside)
        hop = self.full_terms.hopping
        Vpq = hop[P][:, Q].tocoo()
        Vqp = Vpq.T.tocsr()
        # triples (a, b, c): a, b in P, c in Q, weight V_ac V_cb
        a_idx, b_idx, c_idx, w = [], [], [], []
        for a, c, v in zip(Vpq.row, Vpq.col, Vpq.data):
            lo, hi = Vqp.indptr[c], Vqp.indptr[c + 1]
            a_idx.append(np.full(hi - lo, a))
            b_idx.append(Vqp.indices[lo:hi])
            c_idx.append(np.full(hi - lo, c))
            w.append(v * Vqp.data[lo:hi])
        self._a = np.concatenate(a_idx)
        self._b = np.concatenate(b_idx)
        self._c = Q[np.concatenate(c_idx)]
        self._w = np.concatenate(w)
        self._P = P
        n = sub.dim
        pattern = (self.terms.hopping + sp.csr_matrix((np.ones(len(self._a)), (self._a, self._b)),
                                                      shape=(n, n))).tocsr()
        pattern.sum_duplicates()
        pattern.sort_indices()
        self._pattern = pattern
        slot = {(i, j): k for i in range(n) for k, j in
                zip(range(pattern.indptr[i], pattern.indptr[i + 1]),
                    pattern.indices[pattern.indptr[i]:pattern.indptr[i + 1]])}
        self._slot = np.array([slot[(i, j)] for i, j in zip(self._a, self._b)])
        hp = self.terms.hopping.tocoo()
        self._hop_data = np.zeros(pattern.nnz)
        np.add.at(self._hop_data, [slot[(i, j)] for i, j in zip(hp.row, hp.col)], hp.data)
        self._rows = np.repeat(np.arange(n), np.diff(pattern.indptr))
        self._on_diag = self._rows == pattern.indices

    def parts(self, phi: float) -> tuple[np.ndarray, np.ndarray]:
        """CSR data of the off-diagonal part and the diagonal of H_eff(phi)."""
        E = self.full_terms.diagonal(phi)
        Ea, Eb, Ec = E[self._P][self._a], E[self._P][self._b], E[self._c]
        vals = 0.5 * self._w * (1.0 / (Ea - Ec) + 1.0 / (Eb - Ec))
        data = self._hop_data.copy()
        np.add.at(data, self._slot, vals)
        on_diag = self._on_diag
        diag = E[self._P] + np.bincount(self._rows[on_diag], weights=data[on_diag],
                                        minlength=len(self._P))
        data[on_diag] = 0.0
        return data, diag

    def matrix(self, phi: float) -> sp.csr_matrix:
        data, diag = self.parts(phi)
        H = sp.csr_matrix((data, self._pattern.indices, self._pattern.indptr),
                          shape=self._pattern.shape)
        return (H + sp.diags(diag)).tocsr()

    def apply(self, psi: np.ndarray, phi: float, dt: float) -> np.ndarray:
        data, dg = self.parts(phi)
        pat = self._pattern
        bound = np.bincount(self._rows, weights=np.abs(data), minlength=len(dg))
        lo = float((dg - bound).min())
        hi = float((dg + bound).max())
        c = 0.5 * (hi + lo)
        r = 1.01 ** math.ceil(math.log(0.5 * (hi - lo) + 1e-9) / math.log(1.01))
        coef = _coefficients(r * dt)
        out = _chebyshev_kernel(pat.indptr, pat.indices, data, (dg - c) / r, 1.0 / r, coef,
                                np.ascontiguousarray(psi, dtype=np.complex128))
        return np.exp(-1j * c * dt) * out


def _prepare(initial: np.ndarray, spec: ModelSpec, space: str, basis: FockBasis | None):
    if space == FULL:
        basis = basis if basis is not None else build_basis(spec.M, spec.N)
        psi = np.asarray(initial, dtype=complex)
        if len(psi) != basis.dim:
            raise ValueError(f"initial state has length {len(psi)}, basis has {basis.dim}")
        return basis, psi
    if space in (TYPE2, TYPE2_DRESSED):
        if spec.N != 3:
            raise ValueError("the type-(ii) subspace is defined for N=3")
        sub = basis if basis is not None else type2_subspace_basis(spec.M)
        psi = np.asarray(initial, dtype=complex)
        if len(psi) == sub.dim:
            return sub, psi
        inside, residual = project(psi, sub)
        if residual > SUBSPACE_RESIDUAL_TOL:
            raise ValueError(
                f"initial state leaves the type-(ii) subspace (residual {residual:.3g} > "
                f"{SUBSPACE_RESIDUAL_TOL:g}); build it inside the subspace"
            )
        return sub, inside.astype(complex)
    raise ValueError(f"unknown space {space!r}")


def evolve(initial: np.ndarray, spec: ModelSpec, schedule: PumpSchedule, space: str = FULL,
           basis: FockBasis | None = None, method: str = "chebyshev", n_samples: int = 400,
           n_snapshots: int | None = None, extra_onsite: np.ndarray | None = None,
           callback: Callable | None = None) -> Trajectory:
    """Integrate |psi(t)> under H(phi(t)) and record observables.

    Scalar positions are tracked every step so that their unwrapping is
    continuous; vector observables are sampled ``n_samples`` times plus the
    endpoints.
    """
    basis, psi = _prepare(initial, spec, space, basis)
    norm0 = np.linalg.norm(psi)
    if abs(norm0 - 1) > 1e-8:
        raise ValueError(f"initial state is not normalized (norm {norm0:.12g})")
    if space == TYPE2_DRESSED:
        prop = DressedPropagator(spec, basis, extra_onsite=extra_onsite)
    else:
        prop = Propagator(HamiltonianTerms(spec, basis, extra_onsite=extra_onsite), method)
    currents = CurrentOperators(basis, spec.periodic)
    occ = basis.occupations
    pairs = 0.5 * occ * (occ - 1)
    sites = np.arange(1, spec.M + 1)
    xlin = occ @ sites / spec.N
    twist = np.exp(2j * np.pi * (occ @ sites) / spec.M)
    ring = np.exp(2j * np.pi * sites / spec.M)

    n = schedule.n_steps
    dt = schedule.step
    every = max(1, n // max(1, n_samples))
    sample_steps = sorted(set(range(0, n + 1, every)) | {n})
    n_snapshots = n_snapshots or len(sample_steps)
    snap_every = max(1, n // max(1, n_snapshots - 1))
    snap_steps = sorted(set(range(0, n + 1, snap_every)) | {n})

    rec = {k: [] for k in ("t", "dens", "pair", "cur", "norm", "xlin", "twist", "pairc")}
    snaps, snap_t = [], []
    tw_prev = None
    tw_acc = 0.0
    pc_prev = None
    pc_acc = 0.0

    def track(psi):
        nonlocal tw_prev, tw_acc, pc_prev, pc_acc
        prob = np.abs(psi) ** 2
        a = float(np.angle(twist @ prob))
        if tw_prev is not None:
            tw_acc += (a - tw_prev + np.pi) % (2 * np.pi) - np.pi
        tw_prev = a
        pd = prob @ pairs
        if spec.periodic:
            b = float(np.angle(ring @ pd)) if pd.sum() > 1e-12 else 0.0
            if pc_prev is None:
                pc_acc = b
            else:
                pc_acc += (b - pc_prev + np.pi) % (2 * np.pi) - np.pi
            pc_prev = b
        else:
            pc_acc = float(sites @ pd / pd.sum()) if pd.sum() > 1e-12 else math.nan
        return prob, pd

    def record(step, psi, prob, pd):
        t = step * dt
        rec["t"].append(t)
        rec["dens"].append(prob @ occ)
        rec["pair"].append(pd)
        rec["cur"].append(currents.expectation(psi, spec.J))
        rec["norm"].append(math.sqrt(prob.sum()))
        rec["xlin"].append(prob @ xlin)
        rec["twist"].append(tw_acc)
        rec["pairc"].append(pc_acc)

    si = 0
    ni = 0
    prob, pd = track(psi)
    record(0, psi, prob, pd)
    si += 1
    snaps.append(psi.copy())
    snap_t.append(0.0)
    ni += 1
    for s in range(n):
        phi = float(schedule.phase((s + 0.5) * dt))
        psi = prop.apply(psi, phi, dt)
        prob, pd = track(psi)
        if si < len(sample_steps) and sample_steps[si] == s + 1:
            record(s + 1, psi, prob, pd)
            si += 1
        if ni < len(snap_steps) and snap_steps[ni] == s + 1:
            snaps.append(psi.copy())
            snap_t.append((s + 1) * dt)
            ni += 1
        if callback is not None:
            callback(s + 1, (s + 1) * dt, psi)

    twist_sites = np.asarray(rec["twist"]) * spec.M / (2 * np.pi * spec.N)
    x0 = rec["xlin"][0]
    if spec.periodic:
        pair_sites = np.asarray(rec["pairc"]) * spec.M / (2 * np.pi)
        if pair_sites[0] <= 0:
            pair_sites = pair_sites + spec.M
    else:
        pair_sites = np.asarray(rec["pairc"])
    return Trajectory(
        times=np.asarray(rec["t"]), densities=np.asarray(rec["dens"]),
        pair_densities=np.asarray(rec["pair"]), currents=np.asarray(rec["cur"]),
        norms=np.asarray(rec["norm"]), com_linear=np.asarray(rec["xlin"]),
        twist_center=x0 + twist_sites - twist_sites[0], pair_center=pair_sites,
        snapshots=np.asarray(snaps), snapshot_times=np.asarray(snap_t),
        basis=basis, spec=spec, schedule=schedule, space=space,
        meta={"dt": dt, "n_steps": n, "method": method},
    )


def static_evolution(initial: np.ndarray, spec: ModelSpec, duration: float, dt: float = 0.1,
                     **kw) -> Trajectory:
    sched = PumpSchedule(omega=0.0, duration=duration, dt=dt, phi0=spec.phi, J=spec.J)
    return evolve(initial, spec, sched, **kw)


def backward_check(initial: np.ndarray, spec: ModelSpec, duration: float, dt: float = 0.1,
                   basis: FockBasis | None = None) -> float:
    """Fidelity after evolving forward then backward under the static H."""
    basis = basis if basis is not None else build_basis(spec.M, spec.N)
    prop = Propagator(HamiltonianTerms(spec, basis))
    psi = np.asarray(initial, dtype=complex)
    n = int(round(duration / dt))
    for _ in range(n):
        psi = prop.apply(psi, spec.phi, dt)
    for _ in range(n):
        psi = prop.apply(psi, spec.phi, -dt)
    return float(abs(np.vdot(initial, psi)))


# --------------------------------------------------------------------------
# analysis


def detect_transitions(traj: Trajectory, n: int | None = None, smooth: float = 0.02,
                       min_separation: float = 0.1, rel_prominence: float = 0.25) -> np.ndarray:
    """Times (fractions of T) where the bound pair hops, from peaks of its speed.

    The pair-center velocity plays the role of the bound-pair current; it is
    smoothed over ``smooth`` T before peak picking; peaks weaker than
    ``rel_prominence`` of the fastest hop are partial moves and are dropped.
    """
    T = traj.schedule.period if traj.schedule.omega else traj.times[-1]
    x = traj.pair_center
    t = traj.times
    v = np.abs(np.gradient(x, t))
    width = max(1, int(round(smooth * T / (t[1] - t[0]))))
    v = uniform_filter1d(v, width, mode="nearest")
    dist = max(1, int(round(min_separation * T / (t[1] - t[0]))))
    peaks, props = find_peaks(v, distance=dist, prominence=rel_prominence * v.max() if v.max() > 0 else None)
    if n is not None and len(peaks) > n:
        keep = np.argsort(props["prominences"])[::-1][:n]
        peaks = np.sort(peaks[keep])
    return t[peaks] / T


def pump_report(traj: Trajectory, q: int | None = None) -> dict:
    """Net displacements in unit cells and start/end comparisons.

    ``shift_cells`` is the bound-pair center displacement (circular mean of
    the doubly occupied weight on a ring, unwrapped continuously).  The
    linear and twist-based many-body centers are reported alongside; the
    twist value is also reduced to its principal branch modulo L cells.
    """
    spec = traj.spec
    q = q or spec.q
    L = spec.M / q
    pair_shift = (traj.pair_center[-1] - traj.pair_center[0]) / q
    lin_shift = (traj.com_linear[-1] - traj.com_linear[0]) / q
    tw_shift = (traj.twist_center[-1] - traj.twist_center[0]) / q
    shift_sites = int(round(pair_shift * q))
    d0 = traj.densities[0]
    d1 = traj.densities[-1]
    moved = np.roll(d0, shift_sites) if spec.periodic else d0
    rep = {
        "shift_cells": float(pair_shift),
        "com_linear_shift_cells": float(lin_shift),
        "com_twist_shift_cells": float(tw_shift),
        "com_twist_principal_cells": float(principal_shift(tw_shift, L)) if spec.periodic else float(tw_shift),
        "pair_site_start": int(traj.pair_sites()[0]),
        "pair_site_end": int(traj.pair_sites()[-1]),
        "pair_site_path": _compress(traj.pair_sites()),
        "density_distance_translated": float(np.abs(d1 - moved).max()),
        "density_distance_raw": float(np.abs(d1 - d0).max()),
        "norm_drift": float(np.abs(traj.norms - 1).max()),
    }
    if traj.schedule.omega:
        rep["transition_times_T"] = [float(x) for x in detect_transitions(traj)]
    return rep


def _compress(seq) -> list[int]:
    out = []
    for s in seq:
        if not out or out[-1] != int(s):
            out.append(int(s))
    return out


def compare_subspace(full: Trajectory, sub: Trajectory) -> float:
    """max over (t, j) of |<n_j>_full - <n_j>_sub| on shared sample times."""
    if len(full.times) != len(sub.times) or not np.allclose(full.times, sub.times):
        common, i, k = np.intersect1d(np.round(full.times, 9), np.round(sub.times, 9), return_indices=True)
        if len(common) == 0:
            raise ValueError("trajectories share no sample times")
        return float(np.abs(full.densities[i] - sub.densities[k]).max())
    return float(np.abs(full.densities - sub.densities).max())


def band_occupation(traj: Trajectory, band: int = -1, label: str = "type2",
                    solver=None) -> np.ndarray:
    """Weight of each snapshot in the instantaneous band ``band`` (all kappa)."""
    from .bloch import SectorSolver

    if traj.space != FULL:
        raise ValueError("band occupation needs a full-space trajectory")
    solver = solver or SectorSolver(traj.spec, traj.basis)
    out = []
    for t, psi in zip(traj.snapshot_times, traj.snapshots):
        bs = solver.solve(float(traj.schedule.phase(t)))
        b = bs.band(band, label)
        out.append(float((np.abs(b.states.conj().T @ psi) ** 2).sum()))
    return np.asarray(out)


def fock_state(basis: FockBasis, occupations: dict[int, int]) -> np.ndarray:
    """Fock vector from {1-based site: count}."""
    occ = [0] * basis.M
    for j, n in occupations.items():
        occ[j - 1] = n
    return basis.fock_vector(occ)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
