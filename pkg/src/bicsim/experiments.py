"""Named experiments: each maps a config onto module calls and writes data plus SVG plots."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import plots
from . import workflows as wf
from .bloch import SectorSolver, bands_over_grid, bands_to_csv, cluster_bands
from .effective import aah_effective, cluster_energies, effective_closure, svd_decompose
from .lattice import (DISORDER_FIXTURE, PRESETS, ModelSpec, build_basis, build_hamiltonian, embed,
                      preset, random_disorder_profile)
from .observables import accumulated_current, bond_flow, density, profile_to_csv
from .spectral import (average_g2_type2, bic_candidates, diagonalize, classify_states,
                       parallel_map)
from .topology import GaplessError, chern_number, uniform_phi_grid
from .wannier import mlws, spread_functional


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    preset: str | None = None
    spec: dict = field(default_factory=dict)       # full ModelSpec fields or overrides of the preset
    schedule: dict = field(default_factory=dict)   # omega, dt, cycles, strict, space
    grid: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "results"
    threads: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' field")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def model(self) -> ModelSpec:
        """Preset (or the experiment default) with the spec overrides applied."""
        name = self.preset or EXPERIMENTS[self.experiment].preset
        if name is None and not self.spec:
            raise ConfigError(f"{self.experiment} needs a preset or a spec")
        if name is None:
            return ModelSpec.from_dict(self.spec)
        base = preset(name)
        if not self.spec:
            return base
        merged = base.to_dict()
        merged.update(self.spec)
        return ModelSpec.from_dict(merged)

    def resolved(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("threads")
        try:
            d["model"] = self.model().to_dict()
        except ConfigError:
            d["model"] = None
        return d

    def content_hash(self) -> str:
        text = json.dumps(self.resolved(), sort_keys=True, default=str)
        return hashlib.sha256(f"{__version__}\n{text}".encode()).hexdigest()


@dataclass
class RunManifest:
    experiment: str
    config: dict
    content_hash: str
    files: list[str]
    wall_seconds: float
    stats: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def write_table(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, (float, np.floating)) else v for v in r])
    return path


@dataclass(frozen=True)
class Experiment:
    fn: Callable
    preset: str | None
    summary: str


# -- individual experiments; each gets (cfg, spec, out_dir) and returns stats --------------

def _schedule(cfg: ExperimentConfig, spec: ModelSpec, **defaults) -> dyn.PumpSchedule:
    s = dict(defaults)
    s.update({k: v for k, v in cfg.schedule.items() if k != "space"})
    s.setdefault("J", spec.J)
    return dyn.PumpSchedule(**s)


def _trajectory_outputs(d: Path, stem: str, traj: dyn.Trajectory, report: dict, title: str) -> dict:
    traj.to_csv(d / f"{stem}_density.csv")
    traj.to_csv(d / f"{stem}_current.csv", "currents")
    write_table(d / f"{stem}_centers.csv", ["t", "pair_center", "com_linear", "twist_center", "norm"],
                zip(traj.times, traj.pair_center, traj.com_linear, traj.twist_center, traj.norms))
    write_json(d / f"{stem}_report.json", report)
    plots.heatmap(d / f"{stem}_density.svg", traj.times / traj.schedule.period, traj.densities,
                  xlabel="t / T", overlay=traj.pair_center, title=title)
    return report


def exp_spectrum_obc(cfg, spec, d):
    res = wf.obc_spectrum(spec)
    res.to_csv(d / "spectrum.csv")
    bics = bic_candidates(res)
    write_table(d / "bic_candidates.csv", ["index", "energy", "G2"],
                [(int(k), res.energies[k], res.g2[k]) for k in bics])
    plots.spectrum_scatter(d / "spectrum.svg", res.energies, res.g2, res.labels, "open chain spectrum")
    stats = {"dimension": len(res), "counts": res.counts(), "n_bic_candidates": len(bics),
             "orthonormality_error": res.orthonormality_error()}
    for name, e in (("A", wf.BIC_A), ("B", wf.BIC_B), ("middle", wf.BIC_MIDDLE), ("lowest", wf.BIC_LOWEST)):
        k = wf.nearest_in_class(res, e)
        stats[f"bic_{name}"] = {"energy": float(res.energies[k]), "G2": float(res.g2[k])}
    return stats


def exp_bands_pbc(cfg, spec, d):
    solver = SectorSolver(spec)
    bs = solver.solve(spec.phi)
    bands_to_csv(d / "bands.csv", [bs])
    n_clusters = int(cfg.params.get("clusters", spec.q))
    clusters = cluster_bands(bs, n_clusters)
    top = clusters[-1] if clusters else []
    band = int(cfg.params.get("band", top[-1] if top else -1))
    w = mlws(bs.band(band), solver.basis)
    rows = []
    for k in range(len(w)):
        rho = density(w.state(k), solver.basis)
        rows += [(k, j + 1, rho[j]) for j in range(spec.M)]
    write_table(d / "mlws_density.csv", ["wannier", "site", "density"], rows)
    write_json(d / "mlws.json", w.sidecar())
    omega, omega_i, omega_v = spread_functional(w)
    kap = [s.kappa for s in solver.sectors]
    E = np.array([bs.energies[l][bs.class_bands()[l]] for l in range(bs.L)]).T
    plots.band_plot(d / "bands.svg", kap, E, highlight=set(top), title="type-(ii) bands")
    plots.bars(d / "mlws.svg", np.arange(1, spec.M + 1),
               {f"W{k}": density(w.state(k), solver.basis) for k in range(len(w))})
    return {"n_type2_bands": bs.n_class_bands(), "clusters": [len(c) for c in clusters],
            "band": band, "band_width": bs.band(band).width, "centers": w.centers.tolist(),
            "omega": omega, "omega_I": omega_i, "omega_V": omega_v}


def exp_decay(cfg, spec, d):
    times = np.linspace(0.0, float(cfg.grid.get("t_max", 1000.0)), int(cfg.grid.get("n_times", 201)))
    res = wf.decay_study(times)
    write_table(d / "decay.csv", ["t", "r_A", "r_B", "r_C", "r_D"],
                zip(times, res["A"], res["B"], res["C"], res["D"]))
    plots.lines(d / "decay.svg", times, {k: res[k] for k in "ABCD"}, "J t", "r(t)")
    return {k: float(res[k][-1]) for k in "ABCD"} | {"C_band": res["C_band"], "D_band": res["D_band"]}


def exp_pump_qbic(cfg, spec, d):
    sched = _schedule(cfg, spec, omega=1e-3, dt=0.1)
    space = cfg.schedule.get("space", dyn.FULL)
    pick = wf.qbic_initial(spec, int(cfg.params.get("site", 6)), space)
    traj = dyn.evolve(pick.state, spec.replace(phi=sched.phi0), sched, space=space, basis=pick.basis)
    return _trajectory_outputs(d, "pump_qbic", traj, dyn.pump_report(traj), "quasi-BIC pump")


def exp_pump_bic(cfg, spec, d):
    sched = _schedule(cfg, spec, omega=1e-3, dt=0.1)
    psi, E, basis = wf.bic_initial(spec, float(cfg.params.get("energy", wf.BIC_FIG4)))
    traj = dyn.evolve(psi, spec.replace(phi=sched.phi0), sched, basis=basis)
    rep = dyn.pump_report(traj)
    rep["initial_energy"] = E
    return _trajectory_outputs(d, "pump_bic", traj, rep, "BIC pump")


def exp_chern_scan(cfg, spec, d):
    grids = [int(n) for n in cfg.grid.get("n_phi", [30, 60])]
    bands = cfg.params.get("bands", [-1, 0])
    solver = SectorSolver(spec)
    out = {}
    for n in grids:
        structures = bands_over_grid(spec, uniform_phi_grid(n), solver=solver, threads=cfg.threads)
        row = {}
        for b in bands:
            try:
                r = chern_number(spec, int(b), n, structures=structures)
                row[str(b)] = {"chern": r.chern, "raw": r.raw, "min_gap": r.min_gap}
                r.curvature_csv(d / f"curvature_n{n}_band{b}.csv")
            except GaplessError as exc:
                row[str(b)] = {"error": str(exc)}
        dims = {len(sec.reps) for sec in solver.sectors}
        if len(dims) == 1:
            total = chern_number(spec, list(range(dims.pop())), n, label=None,
                                 structures=structures, gap_tol=-1.0)
            row["all_bands"] = {"chern": total.chern, "raw": total.raw}
        else:
            row["all_bands"] = {"error": "momentum sectors differ in dimension"}
        out[str(n)] = row
    write_json(d / "chern.json", out)
    return out


def exp_sweep_g2(cfg, spec, d):
    U0s = [float(u) for u in cfg.grid.get("U0", [25.0, 50.0, 90.0])]
    deltas = [float(x) for x in cfg.grid.get("delta", [0.0, 10.0, 20.0])]
    points = [(u, x) for u in U0s for x in deltas]

    def job(p):
        res = wf.obc_spectrum(spec.replace(U0=p[0], delta=p[1]))
        return average_g2_type2(res), average_g2_type2(res, "formula")

    vals = parallel_map(job, points, cfg.threads)
    write_table(d / "g2_map.csv", ["U0", "delta", "G2_mean", "G2_formula"],
                [(u, x, a, b) for (u, x), (a, b) in zip(points, vals)])
    plots.lines(d / "g2_map.svg", U0s,
                {f"delta={x:g}": [vals[points.index((u, x))][0] for u in U0s] for x in deltas},
                "U0 / J", "mean G2 (type-(ii))")
    return {"points": len(points)}


def exp_size_scan(cfg, spec, d):
    sizes = [int(m) for m in cfg.grid.get("M", [12, 18, 24, 30])]
    rows, profiles, stats = [], {}, {}
    for M in sizes:
        res = wf.obc_spectrum(spec.replace(M=M))
        idx = res.indices("type2")
        k = int(idx[np.argmax(res.energies[idx])])
        rho = density(res.state(k), res.basis)
        j0 = wf.cluster_site(res.state(k), res.basis, 2) - 1
        profiles[M] = rho
        rows += [(M, j + 1, j + 1 - (j0 + 1), rho[j]) for j in range(M)]
        stats[str(M)] = {"energy": float(res.energies[k]), "G2": float(res.g2[k]), "pair_site": j0 + 1}
    write_table(d / "size_scan.csv", ["M", "site", "offset", "density"], rows)
    fig_series = {f"M={M}": profiles[M][:min(sizes)] for M in sizes}
    plots.lines(d / "size_scan.svg", np.arange(1, min(sizes) + 1), fig_series, "site", "<n_j>")
    return stats


def exp_conventional(cfg, spec, d):
    res = wf.obc_spectrum(spec)
    res.to_csv(d / "spectrum.csv")
    stats = {"counts": res.counts()}
    series = {}
    for e in cfg.params.get("energies", [88.47, 89.9474]):
        k = wf.nearest_in_class(res, float(e))
        rho = density(res.state(k), res.basis)
        series[f"E={res.energies[k]:.4f}"] = rho
        stats[f"{float(e):g}"] = {"energy": float(res.energies[k]), "G2": float(res.g2[k])}
    write_table(d / "states.csv", ["site"] + list(series), zip(range(1, spec.M + 1), *series.values()))
    plots.bars(d / "states.svg", np.arange(1, spec.M + 1), series)
    plots.spectrum_scatter(d / "spectrum.svg", res.energies, res.g2, res.labels, "conventional model")
    return stats


def exp_svd_analysis(cfg, spec, d):
    res = wf.obc_spectrum(spec)
    idx = bic_candidates(res)
    rows = []
    for k in idx:
        dec = svd_decompose(res.state(k), res.basis)
        rows.append((int(k), res.energies[k], res.g2[k], dec.D11, dec.D22, dec.fidelity, dec.bic_like))
    write_table(d / "svd.csv", ["index", "energy", "G2", "D11", "D22", "fidelity", "bic_like"], rows)
    e = float(cfg.params.get("energy", wf.BIC_SVD))
    k = wf.nearest_in_class(res, e)
    clo = effective_closure(spec, res.state(k), res.basis, float(res.energies[k]))
    write_table(d / "standing_wave.csv", ["site", "phi_f"], zip(range(1, spec.M + 1), clo.decomposition.phi_f))
    plots.lines(d / "standing_wave.svg", np.arange(1, spec.M + 1),
                {"|phi_f|^2": np.abs(clo.decomposition.phi_f) ** 2}, "site", "")
    return {"n_bic": len(idx), "min_fidelity": min((r[5] for r in rows), default=None),
            "closure": {"energy": float(res.energies[k]), "fidelity": clo.fidelity,
                        "pair_site": clo.pair_site, "pair_energy": clo.pair_energy,
                        "target_energy": clo.target_energy,
                        "singular_values": clo.decomposition.singular_values[:4].tolist()}}


def exp_multiparticle(cfg, spec, d):
    Ns = [int(n) for n in cfg.grid.get("N", [4, 5, 6])]
    out = wf.multiparticle_bics(spec, Ns)
    series = {f"N={n}": out[n]["density"] for n in Ns}
    write_table(d / "densities.csv", ["site"] + list(series), zip(range(1, spec.M + 1), *series.values()))
    plots.bars(d / "densities.svg", np.arange(1, spec.M + 1), series)
    return {str(n): {k: v for k, v in out[n].items() if k != "density"} for n in Ns}


def exp_disorder_pump(cfg, spec, d):
    sched = _schedule(cfg, spec, omega=1e-3, dt=0.1)
    pick = wf.qbic_initial(spec.replace(disorder_strength=0.0, disorder_profile=()),
                           int(cfg.params.get("site", 6)))
    stats = {}
    # params.random_profile draws V_j from cfg.seed instead of the fixed fixture
    profile = (random_disorder_profile(spec.M, cfg.seed) if cfg.params.get("random_profile")
               else spec.disorder_profile or DISORDER_FIXTURE)
    for F in cfg.grid.get("F", [1.0, 3.0, 5.0]):
        s = spec.replace(disorder_strength=float(F), disorder_profile=tuple(profile))
        traj = dyn.evolve(pick.state, s.replace(phi=sched.phi0), sched, basis=pick.basis)
        stats[f"F={float(F):g}"] = _trajectory_outputs(d, f"disorder_F{float(F):g}", traj,
                                                        dyn.pump_report(traj), f"F = {float(F):g}")
    return stats


def exp_currents(cfg, spec, d):
    sched = _schedule(cfg, spec, omega=1e-3, dt=0.1)
    pick = wf.qbic_initial(spec, int(cfg.params.get("site", 6)))
    traj = dyn.evolve(pick.state, spec.replace(phi=sched.phi0), sched, basis=pick.basis)
    dt = float(np.diff(traj.times).mean())
    acc = accumulated_current(traj.currents, dt)
    traj.to_csv(d / "currents.csv", "currents")
    write_table(d / "transported.csv", ["bond", "transported"], zip(range(1, spec.M + 1), acc))
    plots.heatmap(d / "currents.svg", traj.times / sched.period, traj.currents, "t / T", "bond")
    rep = dyn.pump_report(traj)
    return {"transported_total": float(acc.sum()), "transported_per_cell": float(acc.sum() / spec.L),
            "bond_flow_sum": float(bond_flow(acc).sum()),
            "transition_times_T": rep["transition_times_T"], "shift_cells": rep["shift_cells"]}


def exp_bound_pair_pump(cfg, spec, d):
    sched = _schedule(cfg, spec, omega=1e-3, dt=0.1)
    pick = wf.wannier_state(spec, -1, "type2", int(cfg.params.get("site", 6)), phi=0.0)
    traj = dyn.evolve(pick.state, spec.replace(phi=sched.phi0), sched, basis=pick.basis)
    return _trajectory_outputs(d, "bound_pair", traj, dyn.pump_report(traj), "bound-pair pump")


def exp_fock_pump(cfg, spec, d):
    sched = _schedule(cfg, spec, omega=1e-3, dt=0.1)
    occ = {int(k): int(v) for k, v in cfg.params.get("occupations", {"6": 2, "3": 1}).items()}
    basis = build_basis(spec.M, spec.N)
    traj = dyn.evolve(dyn.fock_state(basis, occ), spec.replace(phi=sched.phi0), sched, basis=basis)
    return _trajectory_outputs(d, "fock", traj, dyn.pump_report(traj), "Fock-state pump")


def exp_subspace_check(cfg, spec, d):
    sched = _schedule(cfg, spec, omega=5e-4, dt=0.1)
    site = int(cfg.params.get("site", 6))
    sub = wf.qbic_initial(spec, site, dyn.TYPE2)
    full = build_basis(spec.M, spec.N)
    s0 = spec.replace(phi=sched.phi0)
    tf = dyn.evolve(embed(sub.state, sub.basis, full.dim), s0, sched, basis=full)
    _trajectory_outputs(d, "full", tf, dyn.pump_report(tf), "full space")
    out = {"subspace_dimension": sub.basis.dim, "full_dimension": full.dim}
    devs = {}
    for name, space in (("plain", dyn.TYPE2), ("dressed", dyn.TYPE2_DRESSED)):
        ts = dyn.evolve(sub.state, s0, sched, space=space, basis=sub.basis)
        _trajectory_outputs(d, name, ts, dyn.pump_report(ts), f"{name} type-(ii) subspace")
        devs[name] = np.abs(tf.densities - ts.densities).max(axis=1)
        out[f"{name}_max_density_deviation"] = float(devs[name].max())
        out[f"{name}_at_t_over_T"] = float(tf.times[int(devs[name].argmax())] / sched.period)
    write_table(d / "deviation.csv", ["t", "plain", "dressed"],
                zip(tf.times, devs["plain"], devs["dressed"]))
    return out


def exp_aah_check(cfg, spec, d):
    U0s = [float(u) for u in cfg.grid.get("U0", [30.0, 60.0, 90.0, 150.0])]
    method = cfg.params.get("method", "projector")
    rows = []
    for u in U0s:
        s = spec.replace(U0=u)
        ex = np.sort(cluster_energies(s))
        for m in ("closed", method) if method != "closed" else ("closed",):
            aah = np.sort(aah_effective(s, method=m).energies())
            diff = aah - ex
            rows.append((u, m, float(np.abs(diff).max()), float(np.abs(diff - diff.mean()).max())))
    write_table(d / "aah_error.csv", ["U0", "method", "max_error", "error_without_uniform_shift"], rows)
    return {f"{u:g}/{m}": {"max_error": e, "without_shift": e2} for u, m, e, e2 in rows}


EXPERIMENTS: dict[str, Experiment] = {
    "spectrum_obc": Experiment(exp_spectrum_obc, "fig2", "open-chain spectrum, classes, G2, BICs"),
    "bands_pbc": Experiment(exp_bands_pbc, "fig3", "Bloch bands on a ring and MLWS of one band"),
    "decay": Experiment(exp_decay, "fig2", "decay ratio of BICs and quasi-BICs under static H"),
    "pump_qbic": Experiment(exp_pump_qbic, "fig4_qbic", "pumping of a quasi-BIC on a ring"),
    "pump_bic": Experiment(exp_pump_bic, "fig4_bic", "pumping of an open-chain BIC"),
    "chern_scan": Experiment(exp_chern_scan, "fig4", "Chern numbers of type-(ii) bands"),
    "sweep_g2": Experiment(exp_sweep_g2, "fig2", "mean type-(ii) G2 over (U0, delta)"),
    "size_scan": Experiment(exp_size_scan, "fig2", "highest type-(ii) state versus chain length"),
    "conventional": Experiment(exp_conventional, "sm_s8", "BICs of the unmodulated model"),
    "svd_analysis": Experiment(exp_svd_analysis, "fig2", "SVD decomposition and effective-model closure"),
    "multiparticle": Experiment(exp_multiparticle, "sm_s11", "BICs for N = 4, 5, 6"),
    "disorder_pump": Experiment(exp_disorder_pump, "sm_s13", "quasi-BIC pump with onsite disorder"),
    "currents": Experiment(exp_currents, "fig4_qbic", "local currents during the quasi-BIC pump"),
    "bound_pair_pump": Experiment(exp_bound_pair_pump, "sm_s15", "pumping of a two-boson bound pair"),
    "fock_pump": Experiment(exp_fock_pump, "fig4", "pumping of a Fock product state"),
    "subspace_check": Experiment(exp_subspace_check, "subspace", "full space versus type-(ii) subspace"),
    "aah_check": Experiment(exp_aah_check, "sm_s2", "effective AAH model versus exact clusters"),
}


def run(config: ExperimentConfig | dict) -> RunManifest:
    """Execute one experiment; outputs appear in ``config.out`` only on success."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    cfg.validate()
    spec = cfg.model()
    exp = EXPERIMENTS[cfg.experiment]
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    t0 = time.perf_counter()
    try:
        stats = exp.fn(cfg, spec, tmp)
        write_json(tmp / "result.json", stats)
        files = sorted(p.name for p in tmp.iterdir()) + ["manifest.json"]
        manifest = RunManifest(cfg.experiment, cfg.resolved(), cfg.content_hash(), files,
                               round(time.perf_counter() - t0, 3),
                               {"threads": cfg.threads, "python": platform.python_version()})
        (tmp / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest
