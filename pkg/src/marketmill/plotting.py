"""Static figures for pattern grids, millness curves and the conditional mean response."""

from __future__ import annotations

from typing import Dict, Mapping, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import AsymmetryPattern, ConditionalMean, MillnessReport  # noqa: E402

AXIS_LABELS = {"x0": "x = 0", "y0": "y = 0", "diag": "y = x", "antidiag": "y = -x"}


def _sector_lines(ax, lim):
    kw = dict(color="0.35", lw=0.6, ls="--")
    ax.axhline(0, **kw)
    ax.axvline(0, **kw)
    ax.plot([-lim, lim], [-lim, lim], **kw)
    ax.plot([-lim, lim], [lim, -lim], **kw)


def draw_pattern(ax, pattern: AsymmetryPattern, mill_only: bool = False):
    grid = pattern.p_mill_component if mill_only else pattern.p_asym
    c = pattern.centers
    half = (c[1] - c[0]) / 2 if c.size > 1 else 0.5
    lim = c[-1] + half
    vmax = float(np.max(np.abs(grid))) or 1.0
    im = ax.imshow(grid.T, origin="lower", extent=(-lim, lim, -lim, lim),
                   cmap="magma" if mill_only else "RdBu_r",
                   vmin=0 if mill_only else -vmax, vmax=vmax, interpolation="nearest")
    _sector_lines(ax, lim)
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_xlabel("push x ($)")
    ax.set_ylabel("response y ($)")
    ax.set_title(f"axis {AXIS_LABELS.get(pattern.axis.value, pattern.axis.value)}")
    return im


def render_pattern(pattern: AsymmetryPattern, path, title: Optional[str] = None, mill_only: bool = False):
    fig, ax = plt.subplots(figsize=(5, 4.4))
    im = draw_pattern(ax, pattern, mill_only)
    fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_patterns(patterns: Mapping[str, AsymmetryPattern], path, title: Optional[str] = None,
                    mill_only: bool = True):
    """Up to four patterns in a 2x2 panel."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 8))
    for ax, (_, pat) in zip(axes.flat, patterns.items()):
        im = draw_pattern(ax, pat, mill_only)
        fig.colorbar(im, ax=ax, shrink=0.8)
    for ax in list(axes.flat)[len(patterns):]:
        ax.axis("off")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_millness(rows: Dict[str, Dict[int, MillnessReport]], path):
    """Mean millness against the analysis scale, one line per source."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for source, reports in rows.items():
        dts = sorted(reports)
        mean = [reports[k].mean_rho for k in dts]
        err = [reports[k].std_rho or 0.0 for k in dts]
        ax.errorbar([reports[k].dt for k in dts], mean, yerr=err, marker="o", capsize=3, label=source)
    ax.axhline(0, color="0.6", lw=0.6)
    ax.set_xlabel("dT (min)")
    ax.set_ylabel("millness (%)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_conditional_mean(cm: ConditionalMean, path, sigma: Optional[float] = None):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ok = ~cm.low_confidence
    ax.errorbar(cm.x_center[ok], cm.mean[ok], yerr=cm.stderr[ok], fmt="o", ms=3, capsize=2)
    ax.axhline(0, color="0.6", lw=0.6)
    ax.axvline(0, color="0.6", lw=0.6)
    if sigma:
        for s in (-np.log(2) * sigma, np.log(2) * sigma):
            ax.axvline(s, color="0.8", lw=0.6, ls=":")
    ax.set_xlabel("push x ($)")
    ax.set_ylabel("<y>_x ($)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
