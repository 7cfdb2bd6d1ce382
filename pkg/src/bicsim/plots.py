"""Static SVG figures.  Data files are the contract; plots are conveniences."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp, so identical data gives identical bytes
matplotlib.rcParams["svg.hashsalt"] = "bicsim"
matplotlib.rcParams["svg.fonttype"] = "none"

MAX_COLUMNS = 600
CLASS_COLORS = {"type1": "tab:gray", "type2": "tab:red", "type3": "tab:blue"}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def downsample(times: np.ndarray, data: np.ndarray, limit: int = MAX_COLUMNS):
    step = max(1, int(np.ceil(len(times) / limit)))
    return times[::step], data[::step]


def spectrum_scatter(path, energies, g2, labels, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for lab, color in CLASS_COLORS.items():
        m = np.asarray(labels) == lab
        if m.any():
            ax.scatter(np.flatnonzero(m), np.asarray(energies)[m], c=color, s=4, label=lab)
    ax.set_xlabel("state index")
    ax.set_ylabel("E / J")
    ax2 = ax.inset_axes([0.08, 0.55, 0.35, 0.38])
    ax2.scatter(energies, g2, c=[CLASS_COLORS.get(l, "k") for l in labels], s=2)
    ax2.set_xlabel("E", fontsize=7)
    ax2.set_ylabel("G2", fontsize=7)
    ax2.tick_params(labelsize=6)
    ax.legend(loc="lower right", fontsize=7)
    ax.set_title(title)
    return _save(fig, path)


def heatmap(path, times, values, xlabel: str = "t", ylabel: str = "site",
            overlay: np.ndarray | None = None, title: str = "") -> Path:
    """values: (n_times, n_sites); optional overlay line (one value per time)."""
    t, v = downsample(np.asarray(times), np.asarray(values))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    n = v.shape[1]
    im = ax.imshow(v.T, aspect="auto", origin="lower", cmap="viridis",
                   extent=(t[0], t[-1], 0.5, n + 0.5))
    fig.colorbar(im, ax=ax)
    if overlay is not None:
        _, o = downsample(np.asarray(times), np.asarray(overlay))
        ax.plot(t, o, "w--", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)


def lines(path, x, series: dict, xlabel: str = "", ylabel: str = "", title: str = "",
          logx: bool = False) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, y in series.items():
        ax.plot(x, y, label=str(name))
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=7)
    return _save(fig, path)


def bars(path, sites, series: dict, xlabel: str = "site", ylabel: str = "<n_j>", title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    width = 0.8 / max(1, len(series))
    for k, (name, y) in enumerate(series.items()):
        ax.bar(np.asarray(sites) + (k - (len(series) - 1) / 2) * width, y, width, label=str(name))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=7)
    return _save(fig, path)


def band_plot(path, kappas, energies, highlight=None, title: str = "") -> Path:
    """energies: (n_bands, L) ordered by band."""
    fig, ax = plt.subplots(figsize=(4, 4))
    for b, row in enumerate(energies):
        color = "tab:red" if highlight is not None and b in highlight else "tab:gray"
        ax.plot(kappas, row, ".-", color=color, lw=0.6, ms=2)
    ax.set_xlabel("kappa")
    ax.set_ylabel("E / J")
    ax.set_title(title)
    return _save(fig, path)
