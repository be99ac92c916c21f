"""Figure rendering for evaluation summaries and directivity patterns.

Figures are written straight to files (Agg backend); the CSV/JSON outputs
remain the machine-readable contract.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_GAIN_COLORS = {"none": "#9ecae1", "distance": "#a1d99b", "lfa": "#3182bd"}


def error_boxplot(summary: dict, path):
    """Box plot of signed angular error per method and gain mode.

    Boxes span the quartiles with the median marked; whiskers show the
    10 % / 90 % quantiles.  One panel per position class.
    """
    cells = [c for c in summary.get("cells", []) if c["scope"] == "class" and c.get("frames")]
    classes = sorted({c["label"] for c in cells})
    if not classes:
        classes = ["center"]
    fig, axes = plt.subplots(
        1, len(classes), figsize=(5.5 * len(classes), 4.0), sharey=True, squeeze=False
    )
    for ax, cls in zip(axes[0], classes):
        group = [c for c in cells if c["label"] == cls]
        group.sort(key=lambda c: (c["method"], c["gain_mode"]))
        stats, positions, colors, labels = [], [], [], []
        for i, c in enumerate(group):
            stats.append(
                {
                    "med": c["median"],
                    "q1": c["q25"],
                    "q3": c["q75"],
                    "whislo": c["q10"],
                    "whishi": c["q90"],
                    "label": f"{c['method']}\n{c['gain_mode']}",
                    "fliers": [],
                }
            )
            positions.append(i + 1)
            colors.append(_GAIN_COLORS.get(c["gain_mode"], "#cccccc"))
            labels.append(f"{c['method']}\n{c['gain_mode']}")
        if stats:
            artists = ax.bxp(
                stats, positions=positions, showfliers=False, patch_artist=True, widths=0.6
            )
            for patch, color in zip(artists["boxes"], colors):
                patch.set_facecolor(color)
        ax.axhline(0.0, color="0.6", lw=0.8, zorder=0)
        ax.set_title(f"{cls} positions")
        ax.set_ylabel("signed angular error (deg)")
        ax.grid(axis="y", alpha=0.3)
        if labels:
            ax.set_xticks(positions, labels, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def pattern_figure(pattern, path, elevation_deg: float = 0.0, bands_hz=(500, 1000, 2000, 4000, 8000)):
    """Azimuth cuts of a directivity pattern in dB at selected bands."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    az = pattern.azimuth_deg
    for target in bands_hz:
        try:
            b = pattern.band_index(float(target))
        except ValueError:
            continue
        row = pattern.power[b, pattern._elevation_row(elevation_deg)]
        ax.plot(az, 10.0 * np.log10(np.maximum(row, 1e-12)), label=f"{target:g} Hz")
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("relative power (dB)")
    ax.set_xlim(-180, 180)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)
