"""Static SVG emission for the command-line tools.

Figures are deterministic: the SVG hash salt is pinned and date metadata is
suppressed, so reruns differ at most in nothing.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "rabisense"

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_fisher(path, curves, xlabel="κt", ylabel="F(t)") -> None:
    """Log-log Fisher information curves; curves = [(label, t, fi, se), ...]."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for label, t, fi, se in curves:
        mask = (t > 0) & (fi > 0)
        ax.errorbar(t[mask], fi[mask], yerr=se[mask], fmt="o-", ms=3, lw=1,
                    capsize=2, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_collapse(path, dataset, a, b, measure=None) -> None:
    """Rescaled family A·h^(−a) against h·L^(−b)."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for s in dataset.sets:
        x = s.h * s.L ** (-b)
        y = s.A * s.h ** (-a)
        ax.plot(x, y, "o-", ms=3, lw=1, label=f"L={s.L:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(f"h·L^(-{b:.3g})")
    ax.set_ylabel(f"A·h^(-{a:.3g})")
    title = f"a={a:.3f}, b={b:.3f}"
    if measure is not None:
        title += f", M={measure:.3g}"
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_steady_scan(path, etas, nbars, slope, extra=None) -> None:
    """Steady occupation against system size on log-log axes with the fit."""
    etas = np.asarray(etas, float)
    nbars = np.asarray(nbars, float)
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.loglog(etas, nbars, "o", label="steady ⟨n⟩")
    if extra is not None:
        ax.loglog(etas, extra, "s", mfc="none", label="two-ion")
    ref = nbars[0] * (etas / etas[0]) ** slope
    ax.loglog(etas, ref, "--", lw=1, label=f"slope {slope:.3f}")
    ax.set_xlabel("η")
    ax.set_ylabel("⟨n⟩_st")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_detector_demo(path, times, counts, nbar) -> None:
    """Paired panels: accumulated detection signal and conditional occupation."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5.2, 4.6), sharex=True)
    ax1.step(times, counts, where="post")
    ax1.set_ylabel("detections D(t,0)")
    ax2.plot(times, nbar, lw=1)
    ax2.set_ylabel("⟨n⟩_c")
    ax2.set_xlabel("t")
    fig.tight_layout()
    _save(fig, path)


def plot_kappa_trends(path, sweeps) -> None:
    """Log-log trend panels; sweeps = {name: (values, kappas, analytic)}."""
    n = len(sweeps)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2))
    if n == 1:
        axes = [axes]
    for ax, (name, (vals, kappas, analytic)) in zip(axes, sweeps.items()):
        ax.loglog(vals, kappas, "o-", label="fit")
        ax.loglog(vals, analytic, "--", label="analytic")
        ax.set_xlabel(name)
        ax.set_ylabel("κ")
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
