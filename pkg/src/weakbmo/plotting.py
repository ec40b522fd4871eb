"""Figures written next to the CSV output.  Uses the non-interactive Agg backend
and pins the SVG id salt and date so repeated runs give identical files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "weakbmo"
_META = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META, bbox_inches="tight")
    plt.close(fig)
    return path


def surface_svg(x1, x2, values, t, title, path):
    """Heat map of G_t over the strip; x1, x2, values are 2-D arrays (x1 index, level index)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    mesh = ax.pcolormesh(x1, x2, values, shading="gouraud", cmap="viridis")
    xs = x1[:, 0]
    ax.plot(xs, xs**2, color="white", lw=0.8)
    ax.plot(xs, xs**2 + t * t, color="white", lw=0.8, ls="--")
    seam = xs[np.abs(xs) <= 2 * t]
    ax.plot(seam, 2 * t * np.abs(seam), color="k", lw=0.6, ls=":")
    fig.colorbar(mesh, ax=ax, label="G_t")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(title)
    return _save(fig, path)


def margins_svg(checks, path):
    """Horizontal bars of signed margins (symlog scale), failing checks in red."""
    names = [f"{c.suite}: {c.name}" for c in checks]
    margins = np.array([c.margin if np.isfinite(c.margin) else 0.0 for c in checks])
    colors = ["tab:blue" if c.passed else "tab:red" for c in checks]
    fig, ax = plt.subplots(figsize=(8, 0.22 * len(checks) + 1.2))
    y = np.arange(len(checks))
    ax.barh(y, margins, color=colors)
    ax.set_yticks(y, names, fontsize=6)
    ax.invert_yaxis()
    ax.set_xscale("symlog", linthresh=1e-12)
    ax.axvline(0, color="k", lw=0.6)
    ax.set_xlabel("margin")
    return _save(fig, path)


def growth_svg(rows, path):
    """Variance of the partial Haar sums against the number of terms, with K^d."""
    terms = [r.terms for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(terms, [r.variance for r in rows], "o-", label="variance")
    ax.plot(terms, [r.k_d for r in rows], "s-", label="K^d_h")
    ax.plot(terms, terms, "k:", lw=0.8, label="terms")
    ax.set_xlabel("terms")
    ax.legend()
    return _save(fig, path)
