"""Standalone SVG figures with an embedded provenance comment."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import _atomic_write, canonical_json  # noqa: E402


def _save(fig, path, provenance):
    matplotlib.rcParams["svg.hashsalt"] = "casimirlab"
    matplotlib.rcParams["svg.fonttype"] = "none"  # keep labels as searchable text
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    svg = buf.getvalue()
    comment = "<!-- provenance: " + canonical_json(provenance).replace("--", "- -") + " -->\n"
    head, sep, rest = svg.partition("?>\n")
    svg = head + sep + comment + rest if sep else comment + svg
    _atomic_write(path, svg)


def plot_force_curves(path, curves, provenance):
    """Log-log plot of ``|dF/dd| / R`` (=2 pi |P|) for each pair.

    ``curves`` maps a label to ``(d, gradient_over_R)`` arrays.
    """
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for label, (d, g) in curves.items():
        g = np.abs(np.asarray(g))
        ok = g > 0
        ax.loglog(np.asarray(d)[ok] * 1e9, g[ok], marker=".", label=label)
    ax.set_xlabel("separation d (nm)")
    ax.set_ylabel("|F'| / R (Pa)")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path, provenance)


def plot_histogram(path, stats, provenance, label="F'/R at probe"):
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.stairs(stats.counts, stats.bin_edges, fill=True, alpha=0.6)
    ax.axvline(stats.mean, color="k", lw=1)
    ax.set_xlabel(f"{label} d = {stats.probe_d * 1e9:.1f} nm (Pa)")
    ax.set_ylabel("runs")
    ax.set_title(f"N = {stats.count}, std/mean = {stats.std / abs(stats.mean):.2%}" if stats.mean else f"N = {stats.count}")
    fig.tight_layout()
    _save(fig, path, provenance)


def plot_hydrodynamic(path, d, mean_amp, provenance):
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.loglog(np.asarray(d) * 1e9, np.abs(mean_amp), marker=".")
    ax.set_xlabel("separation d (nm)")
    ax.set_ylabel("hydrodynamic force amplitude (N)")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path, provenance)
