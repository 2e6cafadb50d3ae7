"""Matplotlib rendering of the emitted figure data.

Every renderer takes data already produced by the analytic/estimation layers
and writes a PNG next to the delimited file; nothing here computes model
quantities itself.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_row_curves",
    "render_autocorrelation",
    "render_regime_diagram",
    "render_increment_pmf",
]

_EXPONENT_OF = {"abs_velocity": ("moses", "M - 1/2"),
                "sq_velocity": ("noah", "2L + 2M - 2"),
                "etamsd": ("joseph", "2J"),
                "msd": ("hurst", "2H")}


def render_row_curves(curves: dict, report, path, title: str = "") -> None:
    """2x2 log-log panel of the four observables with their fitted lines."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    for ax, (name, curve) in zip(axes.flat, curves.items()):
        ax.loglog(curve.abscissa, curve.ordinate, "o", ms=3, label=name)
        fit = report.fits.get(name)
        if fit is not None:
            lo, hi = fit.window
            xs = np.geomspace(max(lo, curve.abscissa[0]),
                              min(hi, curve.abscissa[-1]), 50)
            ax.loglog(xs, np.exp(fit.intercept) * xs ** fit.slope, "-",
                      label=f"slope {fit.slope:.3f}, R$^2$={fit.r_squared:.3f}")
        ax.set_xlabel("gap" if name == "etamsd" else "t")
        ax.set_ylabel(name)
        ax.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _read_table(path, comment="#"):
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()
                 and not ln.startswith(comment)]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def render_autocorrelation(data_path, path) -> None:
    header, rows = _read_table(data_path)
    t = np.array([float(r[0]) for r in rows])
    fig, ax = plt.subplots(figsize=(7, 5))
    for j, name in enumerate(header[1:], start=1):
        y = np.array([float(r[j]) for r in rows])
        style = "--" if name.startswith("limit") else "-"
        ax.semilogx(t, y, style, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("autocorrelation")
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_regime_diagram(data_path, path) -> None:
    _, rows = _read_table(data_path)
    rhos = np.array([float(r[0]) for r in rows])
    gammas = np.array([float(r[1]) for r in rows])
    regimes = [r[2] for r in rows]
    names = sorted(set(regimes))
    codes = np.array([names.index(r) for r in regimes])
    fig, ax = plt.subplots(figsize=(7, 5))
    sc = ax.scatter(rhos, gammas, c=codes, s=12, cmap="viridis")
    handles = [plt.Line2D([], [], marker="o", ls="",
                          color=sc.cmap(sc.norm(i)), label=n)
               for i, n in enumerate(names)]
    ax.legend(handles=handles, fontsize=8)
    ax.set_xlabel(r"$\rho$")
    ax.set_ylabel(r"$\gamma$")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_increment_pmf(data_path, path) -> None:
    _, rows = _read_table(data_path)
    ratios = sorted({float(r[0]) for r in rows})
    fig, axes = plt.subplots(1, len(ratios), figsize=(4 * len(ratios), 4))
    if len(ratios) == 1:
        axes = [axes]
    for ax, ratio in zip(axes, ratios):
        sel = [r for r in rows if float(r[0]) == ratio]
        ns = np.array([int(r[1]) for r in sel])
        pmf = np.array([float(r[2]) for r in sel])
        gauss = np.array([float(r[3]) for r in sel])
        ax.semilogy(ns, pmf, "o", ms=3, label="pmf")
        ax.semilogy(ns, gauss, "-.", label="matched Gaussian")
        ax.set_title(f"tau/s = {ratio:g}")
        ax.set_xlabel("n")
        ax.set_ylim(bottom=max(pmf.min(), 1e-12) / 10)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
