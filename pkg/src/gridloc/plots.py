"""Report figures: trajectory overlay, error traces, error histograms.

Rendered headless (Agg) into the report directory next to steps.csv.
The CSV stays the authoritative record; figures are for eyeballing runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

FIG_DPI = 130


def save_report_figures(report, out_dir: Path | str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = report.columns
    title = f"{report.label} ({report.resolution * 100:.0f} cm)"
    paths = []

    fig, ax = plt.subplots(figsize=(7, 6))
    ax.plot(cols["truth_x"], cols["truth_y"], "k-", lw=1.2, label="ground truth")
    ax.plot(cols["est_x"], cols["est_y"], "r--", lw=1.0, label="estimate")
    ax.plot(cols["truth_x"][0], cols["truth_y"][0], "go", ms=7, label="start")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"Trajectory: {title}")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    paths.append(out / "trajectory.png")
    fig.savefig(paths[-1], dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)

    alert = report.aggregates.get("alert_limit")
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    for ax, key, name in zip(axes, ("err_lat", "err_lon", "err_l2"),
                             ("lateral (m)", "longitudinal (m)", "L2 (m)")):
        ax.plot(cols["t"], cols[key], lw=0.9)
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
        if alert and key != "err_l2":
            ax.axhline(alert, color="r", ls=":", lw=0.8)
            ax.axhline(-alert, color="r", ls=":", lw=0.8)
    axes[0].set_title(f"Localization error: {title}")
    axes[-1].set_xlabel("t (s)")
    paths.append(out / "errors.png")
    fig.savefig(paths[-1], dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, key, name in zip(axes, ("err_lat", "err_lon"),
                             ("lateral", "longitudinal")):
        ax.hist(cols[key], bins=40, color="steelblue", alpha=0.85)
        if alert:
            ax.axvline(alert, color="r", ls=":", lw=0.9)
            ax.axvline(-alert, color="r", ls=":", lw=0.9)
        ax.set_xlabel(f"{name} error (m)")
        ax.set_ylabel("steps")
    fig.suptitle(f"Error histograms: {title}")
    paths.append(out / "error_hist.png")
    fig.savefig(paths[-1], dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)
    return paths
