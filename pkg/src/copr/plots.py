"""Figure rendering for the experiment commands.

Everything draws through the Agg backend and writes PNG files next to
the delimited output; nothing here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _masked(phase: np.ndarray, mask: np.ndarray) -> np.ma.MaskedArray:
    return np.ma.masked_where(~mask, phase)


def scene(path, phi_true, mask, frame) -> None:
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3.6))
    im0 = ax0.imshow(_masked(phi_true, mask), cmap="twilight")
    ax0.set_title("aperture phase")
    fig.colorbar(im0, ax=ax0, shrink=0.85)
    im1 = ax1.imshow(frame ** 0.25, cmap="magma")
    ax1.set_title("first frame, intensity$^{1/4}$")
    fig.colorbar(im1, ax=ax1, shrink=0.85)
    for ax in (ax0, ax1):
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def phase_map(path, phase, mask) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(_masked(phase, mask), cmap="twilight")
    ax.set_title("recovered aperture phase")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def sparse_magnitudes(path, rows, n_a: int) -> None:
    """Coefficient magnitudes for the first trial, truth vs estimates."""
    first = [r for r in rows if r[0] == 0]
    picks = {}
    for r in first:
        algorithm, err = r[1], r[5]
        if algorithm == "truth":
            picks["truth"] = r
        elif algorithm == "copr" and "copr" not in picks:
            picks["copr"] = r
        elif algorithm == "copr-l1":
            best = picks.get("copr-l1")
            if best is None or err < best[5]:
                picks["copr-l1"] = r
    fig, ax = plt.subplots(figsize=(6.4, 3.4))
    idx = np.arange(n_a)
    width = 0.27
    for shift, (label, row) in enumerate(sorted(picks.items())):
        mags = np.asarray(row[9:9 + n_a], dtype=float)
        ax.bar(idx + (shift - 1) * width, mags, width, label=label)
    ax.set_xlabel("coefficient index")
    ax.set_ylabel("|a_i|")
    ax.set_title("sparse recovery, trial 0")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def scaling(path, rows, slope: float) -> None:
    n_a = np.array([r[0] for r in rows], dtype=float)
    secs = np.array([r[-1] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.loglog(n_a, secs, "o-", label="measured")
    if np.isfinite(slope) and len(n_a) >= 2:
        ref = secs[0] * (n_a / n_a[0]) ** slope
        ax.loglog(n_a, ref, "--", label=f"fit slope {slope:.2f}")
    ax.set_xlabel("basis size $n_a$")
    ax.set_ylabel("wall time to tolerance [s]")
    ax.set_title("scaling of time to fixed accuracy")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def robustness(path, summary_rows) -> None:
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    combos = sorted({(r[1], r[2]) for r in summary_rows})
    for algorithm, n_a in combos:
        pts = sorted((r[0], r[3], r[4], r[5]) for r in summary_rows
                     if r[1] == algorithm and r[2] == n_a)
        sig = [p[0] for p in pts]
        med = [p[1] for p in pts]
        lo = [p[1] - p[2] for p in pts]
        hi = [p[3] - p[1] for p in pts]
        ax.errorbar(sig, med, yerr=[lo, hi], marker="o", capsize=3,
                    label=f"{algorithm}, $n_a$={n_a}")
    ax.set_xlabel("noise level $\\sigma$")
    ax.set_ylabel("Strehl ratio (median, quartiles)")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("robustness to measurement noise")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def fixedpoint(path, rows) -> None:
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for label in ("picard", "copr"):
        pts = [(r[1], r[2]) for r in rows if r[0] == label]
        if not pts:
            continue
        steps = [p[0] for p in pts]
        dist = [max(p[1], 1e-18) for p in pts]
        ax.semilogy(steps, dist, "o-", ms=3, label=label)
    ax.set_xlabel("step $k$")
    ax.set_ylabel("distance to the solution set")
    ax.set_title("fixed-point iteration diagnostics")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
