"""SVG figures for the CLI outputs.

Figures are written with a fixed hash salt and no date stamp so that the
same data always produces the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "dsse"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def voltage_series(hours, magnitudes, labels, path, title: str = "", max_lines: int = 12) -> Path:
    """Node voltage magnitudes over time, one line per node.

    With more than ``max_lines`` nodes an evenly spaced subset is drawn.
    """
    magnitudes = np.asarray(magnitudes)
    cols = np.arange(magnitudes.shape[1])
    if cols.size > max_lines:
        cols = np.unique(np.linspace(0, cols.size - 1, max_lines).round().astype(int))
    fig, ax = plt.subplots(figsize=(8, 4))
    for c in cols:
        ax.plot(hours, magnitudes[:, c], lw=1, label=labels[c])
    ax.set_xlabel("hour of year")
    ax.set_ylabel("|V| (p.u.)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, ncol=2, loc="best")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def error_histogram(errors, p95: float, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.ravel(errors), bins=60, color="0.4")
    ax.axvline(p95, color="C3", ls="--", label=f"95th percentile = {p95:.3f}%")
    ax.set_xlabel("node error (%)")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def sweep_lines(axis, noise_levels, p95, p95_std, path, xlabel: str, title: str = "") -> Path:
    """p95 error against the sweep grid, one line per sensor noise level."""
    p95 = np.asarray(p95)
    p95_std = np.asarray(p95_std)
    x = np.arange(len(axis)) if not all(isinstance(a, (int, float)) for a in axis) else np.asarray(axis, float)
    fig, ax = plt.subplots(figsize=(6, 4))
    for j, s in enumerate(noise_levels):
        ax.errorbar(x, p95[:, j], yerr=p95_std[:, j] if p95_std.any() else None,
                    marker="o", ms=3, capsize=2, label=f"sensor sigma {s:g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("95th percentile node error (%)")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)
