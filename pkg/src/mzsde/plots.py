"""Figure rendering for the report path.

Every command that writes delimited output can also render the matching
matplotlib figure next to it.  Figures are diagnostics, not part of the
byte-reproducibility contract (that covers CSV/JSON only).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_spectrum",
    "plot_kernel_decay",
    "plot_gle",
    "plot_correlation",
    "plot_cross_validation",
]

plt.rcParams["figure.figsize"] = (6.4, 4.2)
plt.rcParams["figure.dpi"] = 120
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path))
    plt.close(fig)


def plot_spectrum(reports: dict, path) -> None:
    """Complex-plane scatter of one or more spectra with gap markers."""
    fig, ax = plt.subplots()
    markers = ["o", "s", "^", "d"]
    for i, (label, rep) in enumerate(reports.items()):
        eigs = rep.eigenvalues
        ax.scatter(eigs.real, eigs.imag, s=18, marker=markers[i % len(markers)],
                   alpha=0.8, label=label)
        if rep.spectral_gap is not None:
            ax.axvline(rep.spectral_gap, ls="--", lw=0.8, color=f"C{i}", alpha=0.6)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel(r"Re $\lambda$")
    ax.set_ylabel(r"Im $\lambda$")
    ax.legend()
    _save(fig, path)


def plot_kernel_decay(dec, path) -> None:
    """Kernel entries over time plus the residual relaxation envelope."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 4.0))
    t = dec.time_grid
    m = dec.omega.shape[0]
    for i in range(m):
        for j in range(m):
            ax1.plot(t, dec.kernel_series[:, i, j], label=f"K[{i},{j}](t)")
            ax1.axhline(dec.kernel_equilibrium[i, j], ls=":", lw=0.8, color="k")
    ax1.set_xlabel("t")
    ax1.set_ylabel("memory kernel")
    ax1.legend(fontsize=8)

    resid = dec.kernel_residuals
    pos = resid > 0
    ax2.semilogy(t[pos], resid[pos], label=r"$\|K(t)-K_\infty\|$")
    fit = dec.kernel_fit
    if not fit.degenerate and fit.rate is not None:
        ax2.semilogy(t, fit.constant * np.exp(-fit.rate * t), "--",
                     label=f"fit rate {fit.rate:.4g}")
    ax2.set_xlabel("t")
    ax2.set_ylabel("residual")
    ax2.legend(fontsize=8)
    _save(fig, path)


def plot_gle(times, trajectory, path, reference=None, labels=None) -> None:
    fig, ax = plt.subplots()
    trajectory = np.atleast_2d(trajectory.T).T
    for j in range(trajectory.shape[1]):
        name = labels[j] if labels else f"q{j}"
        ax.plot(times, trajectory[:, j], label=name)
    if reference is not None:
        ax.plot(times, reference, "k--", lw=1.0, label="closed form")
    ax.set_xlabel("t")
    ax.set_ylabel("projected observable")
    ax.legend()
    _save(fig, path)


def plot_correlation(estimate, path, reference=None) -> None:
    fig, ax = plt.subplots()
    ax.errorbar(estimate.lags, estimate.values, yerr=3 * estimate.standard_errors,
                fmt="o", ms=3, lw=0.8, capsize=2, label="Monte Carlo (3 s.e.)")
    if reference is not None:
        ax.plot(estimate.lags, reference, "k-", lw=1.0, label="model")
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    ax.legend()
    _save(fig, path)


def plot_cross_validation(cv, path) -> None:
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.6),
                                   height_ratios=[2, 1])
    ax1.plot(cv.lags, cv.reference, "k-", lw=1.0, label="projected GLE")
    ax1.plot(cv.lags, cv.estimate, "o", ms=3, label="Monte Carlo")
    ax1.set_ylabel("normalized autocorrelation")
    ax1.legend()
    ax2.axhline(cv.threshold, color="r", ls="--", lw=0.8)
    ax2.axhline(-cv.threshold, color="r", ls="--", lw=0.8)
    ax2.plot(cv.lags, cv.z_scores, ".-", ms=3, lw=0.6)
    ax2.set_xlabel("lag")
    ax2.set_ylabel("z")
    _save(fig, path)
