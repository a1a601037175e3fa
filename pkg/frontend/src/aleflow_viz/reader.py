"""Read-only access to a solver run directory via its manifest.

The manifest indexes every emitted file; nothing outside that index is
touched.  Snapshots carry the interface samples (s, h, smoothed height,
curvature) plus a JSON header with the time and norms; the time series is
one CSV row per step.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

SUPPORTED_SCHEMA = 1

TIMESERIES_COLUMNS = ["t", "kinetic", "surface_energy", "total_energy",
                      "area", "length", "div_norm", "h_H2", "v_H1",
                      "fp_iters"]


class MissingRunData(RuntimeError):
    """A requested run file or snapshot time is not available."""


@dataclass
class Snapshot:
    t: float
    s: np.ndarray
    h: np.ndarray
    h_ee: np.ndarray
    curvature: np.ndarray
    header: dict

    def boundary_curve(self):
        """Interface points x = (1 + h) (cos s, sin s) of the height graph."""
        radius = 1.0 + self.h
        return radius * np.cos(self.s), radius * np.sin(self.s)


@dataclass
class RunData:
    """Lazy, manifest-driven view of one run directory."""

    run_dir: str
    manifest: dict = field(default=None)

    def __post_init__(self):
        path = os.path.join(self.run_dir, "manifest.json")
        if not os.path.exists(path):
            raise MissingRunData(f"no manifest.json in {self.run_dir}")
        with open(path, "r", encoding="utf-8") as fh:
            self.manifest = json.load(fh)

    # -- snapshots -------------------------------------------------------------

    def snapshot_headers(self):
        out = []
        for rel in self.manifest.get("snapshots", []):
            with open(os.path.join(self.run_dir, rel), "r",
                      encoding="utf-8") as fh:
                header = json.load(fh)
            if header.get("schema_version") != SUPPORTED_SCHEMA:
                raise MissingRunData(
                    f"unsupported snapshot schema in {rel}")
            out.append((rel, header))
        return out

    def available_times(self):
        return np.array([h["t"] for _, h in self.snapshot_headers()])

    def load_snapshot(self, rel, header):
        iname = header["files"]["interface"]
        data = np.loadtxt(os.path.join(self.run_dir, iname),
                          delimiter=",", skiprows=1)
        return Snapshot(t=header["t"], s=data[:, 0], h=data[:, 1],
                        h_ee=data[:, 2], curvature=data[:, 3], header=header)

    def snapshots_near(self, times):
        """Nearest-in-time snapshot for each requested time (deduplicated)."""
        headers = self.snapshot_headers()
        if not headers:
            raise MissingRunData(f"run {self.run_dir} has no snapshots")
        avail = np.array([h["t"] for _, h in headers])
        picked = []
        for t in times:
            picked.append(int(np.argmin(np.abs(avail - t))))
        out = []
        for idx in sorted(set(picked)):
            rel, header = headers[idx]
            out.append(self.load_snapshot(rel, header))
        return out

    # -- time series -----------------------------------------------------------

    def timeseries(self):
        rel = self.manifest.get("timeseries")
        if not rel:
            raise MissingRunData(f"run {self.run_dir} has no time series")
        path = os.path.join(self.run_dir, rel)
        if not os.path.exists(path):
            raise MissingRunData(f"missing time series file {rel}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return {name: (data[:, i] if data.size else np.empty(0))
                for i, name in enumerate(TIMESERIES_COLUMNS)}
