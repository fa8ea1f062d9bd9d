"""Report figures rendered to PNG files (non-interactive Agg backend).

PNG metadata is stripped of the software tag so repeated runs write
identical bytes.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def flat_check_figure(rows: list[dict], path: Path) -> Path:
    """Relative error of the computed multiplier against mode number, per depth."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        nz_max = max(r["nz"] for r in rows)
        for depth in dict.fromkeys(r["depth"] for r in rows):
            sel = [r for r in rows if r["depth"] == depth and r["nz"] == nz_max]
            ax1.semilogy([r["k"] for r in sel], [r["rel_error"] for r in sel], "o-", label=f"depth {depth}")
            levels = sorted({r["nz"] for r in rows})
            worst = [max(r["rel_error"] for r in rows if r["depth"] == depth and r["nz"] == nz) for nz in levels]
            ax2.loglog(levels, worst, "s-", label=f"depth {depth}")
        ax1.set_xlabel("k")
        ax1.set_ylabel("relative error")
        ax1.set_title(f"N_z = {nz_max}")
        ax1.legend()
        ax2.set_xlabel("N_z")
        ax2.set_ylabel("max relative error")
        ax2.legend()
        return _save(fig, path)


def ratio_histogram(ratios: np.ndarray, bounds: np.ndarray, labels: list[str], title: str, path: Path) -> Path:
    """Histogram of ratio / bound; every sample should sit right of 1."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        q = np.asarray(ratios) / np.asarray(bounds)
        labels = np.asarray(labels)
        for lab in dict.fromkeys(labels.tolist()):
            ax.hist(q[labels == lab], bins=30, alpha=0.6, label=lab)
        ax.axvline(1.0, color="k", lw=1)
        ax.set_xlabel("ratio / bound")
        ax.set_ylabel("count")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def poincare_figure(quotients: dict, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p, q in quotients.items():
            ax.hist(q, bins=40, alpha=0.6, label=f"p = {p:g}")
        ax.set_xlabel("Poincare quotient")
        ax.set_ylabel("count")
        ax.legend()
        return _save(fig, path)


def sharp_figure(cases: list[dict], x: np.ndarray, path: Path) -> Path:
    """Minimising eigenvectors, normalised to unit sup norm."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for c in cases:
            v = np.asarray(c["eigenvector"])
            ax.plot(x, v / np.max(np.abs(v)), label=f"{c['kind']} {c['depth']:g}: {c['value']:.6f}")
        ax.set_xlabel("x")
        ax.set_ylabel("minimiser")
        ax.legend()
        return _save(fig, path)


def decay_figure(t: np.ndarray, series: dict, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key, y in series.items():
            ax.semilogy(t, y, label=key)
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.legend(ncol=2)
        return _save(fig, path)


def snapshot_figure(x: np.ndarray, snapshots: list, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        cmap = plt.get_cmap("viridis")
        for i, (t, f) in enumerate(snapshots):
            ax.plot(x, f, color=cmap(i / max(1, len(snapshots) - 1)), label=f"t = {t:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("f")
        if len(snapshots) <= 8:
            ax.legend()
        return _save(fig, path)
