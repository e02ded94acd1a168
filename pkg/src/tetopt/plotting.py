"""Report figures written to image files (no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def dihedral_histogram(stats, labels, path):
    """Overlayed dihedral angle histograms, one per :class:`QualityStats`."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for s, label in zip(stats, labels):
        b = np.asarray(s.angle_bins, dtype=float)
        frac = np.asarray(s.angle_counts, dtype=float) / max(1, int(np.sum(s.angle_counts)))
        ax.stairs(frac, b, label=f"{label}: min {s.theta_min:.1f}, max {s.theta_max:.1f}")
    ax.set_xlabel("dihedral angle (degrees)")
    ax.set_ylabel("fraction of angles")
    ax.set_xlim(0, 180)
    ax.legend(fontsize=8)
    return _save(fig, path)


def q_history(values, path, theta_lim=None):
    """Smallest dihedral angle after each lazy flip pass."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(values)), values, marker=".", lw=1)
    if theta_lim is not None:
        ax.axhline(theta_lim, color="k", ls="--", lw=0.8, label="target")
        ax.legend(fontsize=8)
    ax.set_xlabel("pass")
    ax.set_ylabel("min dihedral angle (degrees)")
    return _save(fig, path)


def energy_trace(times, energies, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(times, energies, marker=".", lw=1)
    ax.set_xlabel("pseudo-time")
    ax.set_ylabel("energy")
    return _save(fig, path)
