"""The two figures: interface overlays and energy/area time series."""

import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .reader import MissingRunData, RunData  # noqa: E402


@dataclass
class PlotResult:
    """Path of the written image plus the numbers annotated on it."""

    path: str
    annotations: dict = field(default_factory=dict)

    def __fspath__(self):
        return self.path


@dataclass
class PlotJob:
    """One batch of figures for a run directory."""

    run_dir: str
    figures: tuple = ("interface", "energy")
    out_dir: str = "."
    times: tuple = ()

    def execute(self):
        results = []
        for fig in self.figures:
            if fig == "interface":
                times = self.times or tuple(
                    RunData(self.run_dir).available_times())
                results.append(plot_interface(
                    self.run_dir, times,
                    out_path=os.path.join(self.out_dir, "interface.png")))
            elif fig == "energy":
                results.append(plot_energy(
                    self.run_dir,
                    out_path=os.path.join(self.out_dir, "energy.png")))
            else:
                raise ValueError(f"unknown figure {fig!r}")
        return results


def curve_spread(snapshots):
    """Max radial deviation between the overlaid interface curves."""
    radii = np.stack([1.0 + snap.h for snap in snapshots])
    return float(np.max(radii.max(axis=0) - radii.min(axis=0)))


def plot_interface(run_dir, times, out_path="interface.png"):
    """Overlay the interface at the requested times (nearest snapshots).

    The annotation box reports the maximum radial deviation between the
    plotted curves, so a stationary run is certified by the figure itself.
    """
    if times is None or len(times) == 0:
        raise MissingRunData("no times requested for the interface overlay")
    run = RunData(run_dir)
    try:
        snapshots = run.snapshots_near(times)
    except MissingRunData:
        raise
    if not snapshots:
        avail = ", ".join(f"{t:g}" for t in run.available_times())
        raise MissingRunData(
            f"no snapshots matched; available times: {avail}")

    spread = curve_spread(snapshots)
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for snap in snapshots:
        x, y = snap.boundary_curve()
        x = np.append(x, x[0])
        y = np.append(y, y[0])
        ax.plot(x, y, lw=1.2, label=f"t = {snap.t:g}")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title("interface evolution")
    ax.legend(loc="upper right", fontsize=8)
    ax.annotate(f"max curve deviation = {spread:.3e}",
                xy=(0.02, 0.02), xycoords="axes fraction", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return PlotResult(path=out_path,
                      annotations={"max_curve_deviation": spread,
                                   "times": [s.t for s in snapshots]})


def plot_energy(run_dir, out_path="energy.png"):
    """Kinetic, surface and total energy over time with the area trace.

    Annotates the maximum per-step increase of the total energy (negative
    when the run dissipates monotonically).
    """
    run = RunData(run_dir)
    ts = run.timeseries()
    if ts["t"].size == 0:
        raise MissingRunData("time series has no rows")
    total = ts["total_energy"]
    max_increase = float(np.max(np.diff(total))) if total.size > 1 else 0.0
    rel = max_increase / total[0] if total.size and total[0] else 0.0

    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(7.0, 6.0), sharex=True,
        gridspec_kw={"height_ratios": [2, 1]})
    ax1.plot(ts["t"], ts["kinetic"], label="kinetic")
    ax1.plot(ts["t"], ts["surface_energy"], label="surface")
    ax1.plot(ts["t"], total, label="total", lw=2)
    ax1.set_ylabel("energy")
    ax1.legend(fontsize=8)
    ax1.annotate(
        f"max per-step total increase = {max_increase:.3e} "
        f"({rel:.2e} of E(0))",
        xy=(0.02, 0.04), xycoords="axes fraction", fontsize=8)
    ax2.plot(ts["t"], ts["area"], color="tab:green")
    ax2.set_ylabel("area")
    ax2.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return PlotResult(path=out_path,
                      annotations={"max_energy_increase": max_increase,
                                   "max_energy_increase_rel": rel})
