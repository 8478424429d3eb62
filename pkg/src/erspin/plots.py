"""Self-contained SVG renderings (matplotlib, imported lazily)."""
from __future__ import annotations


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "erspin"
    matplotlib.rcParams["svg.fonttype"] = "none"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def line_plot(path, series, *, xlabel: str, ylabel: str, logx=False, logy=False, title: str = "",
              markers: bool = False):
    """``series``: list of ``(label, x, y)`` or ``(label, x, y, yerr)``."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for item in series:
        label, x, y = item[:3]
        yerr = item[3] if len(item) > 3 else None
        if yerr is not None:
            ax.errorbar(x, y, yerr=yerr, fmt="o", ms=3, label=label)
        else:
            ax.plot(x, y, "o-" if markers else "-", ms=3, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if any(s[0] for s in series):
        ax.legend(frameon=False, fontsize=8)
    _save(fig, path)
    plt.close(fig)


def histogram_plot(path, counts, bright, dark, threshold: int):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(counts, dark, width=0.8, alpha=0.6, label="dark")
    ax.bar(counts, bright, width=0.8, alpha=0.6, label="bright")
    ax.axvline(threshold - 0.5, color="k", ls="--", lw=1)
    ax.set_xlabel("detected photons")
    ax.set_ylabel("probability")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)
    plt.close(fig)
