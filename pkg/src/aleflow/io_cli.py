"""Configuration files, snapshot/diagnostic serialization, CLI entry points.

Formats are plain CSV plus a JSON header per snapshot: desk-scale data,
plotter-friendly, diffable.  Floats are written with 17 significant digits so
output bytes are deterministic and reloading reproduces the state exactly.
"""

import argparse
import datetime as _dt
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import (AleflowError, ConfigParseError, ConfigValidationError)
from .timestepper import (TIMESERIES_COLUMNS, SimState, SolverConfig,
                          TimeStepper)

SCHEMA_VERSION = 1


def _fmt(x):
    return f"{float(x):.17g}"


# -- configuration --------------------------------------------------------------

_CONFIG_TYPES = {f.name: f.type for f in fields(SolverConfig)}
_INT_KEYS = {"n_r", "n_theta", "fp_max_iter", "snapshot_every",
             "perturbation_mode"}
_STR_KEYS = {"output_dir", "seed_case"}


def load_config(path):
    """Parse a flat key = value file into a validated SolverConfig.

    Unknown keys and malformed lines are parse errors; values violating a
    documented invariant raise a validation error.  Absent keys take their
    documented defaults.
    """
    cfg = SolverConfig()
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigParseError(
                    f"{path}:{line_no}: expected 'key = value', got {raw!r}",
                    line_no=line_no)
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise ConfigParseError(
                    f"{path}:{line_no}: unknown key {key!r}",
                    line_no=line_no, key=key)
            if key in seen:
                raise ConfigParseError(
                    f"{path}:{line_no}: duplicate key {key!r}",
                    line_no=line_no, key=key)
            seen.add(key)
            try:
                if key in _STR_KEYS:
                    parsed = value
                elif key in _INT_KEYS:
                    parsed = int(value)
                else:
                    parsed = float(value)
            except ValueError as exc:
                raise ConfigParseError(
                    f"{path}:{line_no}: bad value for {key!r}: {exc}",
                    line_no=line_no, key=key) from None
            setattr(cfg, key, parsed)
    cfg.validate()
    return cfg


def save_config(cfg, path):
    """Write a config file that loads back to the same normalized values."""
    cfg.normalize()
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(SolverConfig):
            value = getattr(cfg, f.name)
            if f.name in _STR_KEYS:
                fh.write(f"{f.name} = {value}\n")
            elif f.name in _INT_KEYS:
                fh.write(f"{f.name} = {int(value)}\n")
            else:
                fh.write(f"{f.name} = {_fmt(value)}\n")
    return path


# -- snapshots --------------------------------------------------------------------


def write_snapshot(state, out_dir, index=0):
    """Write one state as interface CSV + field CSV + JSON header.

    Returns the path of the JSON header, which indexes the two CSV files.
    Byte-stable for identical states.
    """
    os.makedirs(out_dir, exist_ok=True)
    curve = state.m.curve
    grid = state.m.grid
    prefix = f"snap_{index:06d}"
    interface_path = os.path.join(out_dir, f"{prefix}.interface.csv")
    fields_path = os.path.join(out_dir, f"{prefix}.fields.csv")
    header_path = os.path.join(out_dir, f"{prefix}.json")

    from .geometry import curvature as curvature_of
    h_ee = state.m.boundary_height
    curv = curvature_of(state.h, curve)
    with open(interface_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("s,h,h_ee,curvature\n")
        for j in range(curve.n_theta):
            fh.write(",".join(_fmt(x) for x in
                              (curve.s[j], state.h[j], h_ee[j], curv[j])) + "\n")

    with open(fields_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("r,theta,w1,w2,q,J\n")
        for i in range(grid.n_r):
            for j in range(grid.n_theta):
                fh.write(",".join(_fmt(x) for x in
                                  (grid.r[i], grid.theta[j],
                                   state.w[0, i, j], state.w[1, i, j],
                                   state.q[i, j], state.m.jac[i, j])) + "\n")

    d = state.diagnostics
    header = {
        "schema_version": SCHEMA_VERSION,
        "t": float(state.t),
        "n_r": grid.n_r,
        "n_theta": grid.n_theta,
        "files": {"interface": os.path.basename(interface_path),
                  "fields": os.path.basename(fields_path)},
        "norms": None if d is None else {
            "kinetic": d.kinetic,
            "surface_energy": d.surface_energy,
            "total_energy": d.total_energy,
            "area": d.area,
            "length": d.length,
            "div_norm": d.div_norm,
            "h_H2": d.h_h2,
            "v_H1": d.v_h1,
        },
    }
    with open(header_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return header_path


def read_snapshot(header_path):
    """Load a snapshot back into plain arrays (exact float round trip)."""
    with open(header_path, "r", encoding="utf-8") as fh:
        header = json.load(fh)
    base = os.path.dirname(header_path)
    n_r, n_theta = header["n_r"], header["n_theta"]
    idata = np.loadtxt(os.path.join(base, header["files"]["interface"]),
                       delimiter=",", skiprows=1)
    fdata = np.loadtxt(os.path.join(base, header["files"]["fields"]),
                       delimiter=",", skiprows=1)
    h = idata[:, 1].copy()
    w = np.stack([fdata[:, 2].reshape(n_r, n_theta),
                  fdata[:, 3].reshape(n_r, n_theta)])
    q = fdata[:, 4].reshape(n_r, n_theta)
    return {"t": header["t"], "h": h, "w": w, "q": q, "header": header}


def state_from_snapshot(header_path, stepper):
    """Rebuild a SimState (map included) from a snapshot header path."""
    data = read_snapshot(header_path)
    m = stepper.build_map(data["h"])
    state = SimState(t=data["t"], h=data["h"], w=data["w"], q=data["q"], m=m)
    state.diagnostics = stepper.energy(state)
    return state


# -- diagnostics time series -------------------------------------------------------


class TimeseriesWriter:
    """Appends one CSV row per step with a fixed documented schema."""

    def __init__(self, path):
        self.path = path
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(TIMESERIES_COLUMNS) + "\n")

    def append(self, record):
        with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(_fmt(x) for x in record.as_row()) + "\n")


def write_timeseries(records, path):
    """One-shot version of :class:`TimeseriesWriter` for a record stream."""
    writer = TimeseriesWriter(path)
    for rec in records:
        writer.append(rec)
    return path


def read_timeseries(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] if data.size else np.empty(0)
            for i, name in enumerate(TIMESERIES_COLUMNS)}


# -- run manifest --------------------------------------------------------------------


@dataclass
class RunManifest:
    """Index of everything a run emitted, written even on failure."""

    config: dict
    version: str
    started_at: str
    finished_at: str = ""
    status: str = "io_error"
    message: str = ""
    snapshots: list = field(default_factory=list)
    timeseries: str = ""

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, out_dir):
        with open(os.path.join(out_dir, "manifest.json"), "r",
                  encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def validate_files(self, out_dir):
        for rel in self.snapshots:
            read_snapshot(os.path.join(out_dir, rel))
        if self.timeseries:
            read_timeseries(os.path.join(out_dir, self.timeseries))
        allowed = {"completed", "smallness_violation",
                   "fixed_point_divergence", "not_diffeomorphism", "io_error"}
        if self.status not in allowed:
            raise ValueError(f"unknown terminal status {self.status!r}")


# -- CLI ---------------------------------------------------------------------------


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _config_echo(cfg):
    return {f.name: getattr(cfg, f.name) for f in fields(SolverConfig)}


def run_from_config(cfg, config_dir="."):
    """Execute a configured run, writing snapshots, time series and manifest.

    Returns (manifest, exit_code).
    """
    from . import __version__
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    manifest = RunManifest(config=_config_echo(cfg), version=__version__,
                           started_at=_now())
    exit_code = 3
    try:
        stepper = TimeStepper(cfg)
        h_custom = None
        if cfg.seed_case == "custom_csv":
            seed_path = os.path.join(config_dir, "h0.csv")
            data = np.loadtxt(seed_path, delimiter=",", skiprows=1, ndmin=2)
            h_custom = data[:, 1]
        h0, w0 = stepper.seed_fields(h_custom=h_custom)

        writer = TimeseriesWriter(os.path.join(out_dir, "timeseries.csv"))
        manifest.timeseries = "timeseries.csv"
        counter = {"step": 0}

        def on_step(state):
            counter["step"] += 1
            writer.append(state.diagnostics)
            if counter["step"] % cfg.snapshot_every == 0:
                path = write_snapshot(state, out_dir, index=counter["step"])
                manifest.snapshots.append(os.path.basename(path))

        result = stepper.run(w0=w0, h0=h0, on_step=on_step)
        first = result.states[0]
        writer0_path = write_snapshot(first, out_dir, index=0)
        manifest.snapshots.insert(0, os.path.basename(writer0_path))
        last_index = counter["step"]
        if last_index % cfg.snapshot_every != 0 or last_index == 0:
            path = write_snapshot(result.final, out_dir, index=last_index)
            manifest.snapshots.append(os.path.basename(path))
        # the t = 0 record is written after the loop so rows stay ordered
        rows = [rec for rec in result.records]
        write_timeseries(rows, os.path.join(out_dir, "timeseries.csv"))
        manifest.status = result.status
        manifest.message = result.message
        exit_code = 0 if result.status == "completed" else 3
    except AleflowError as exc:
        from .errors import (FixedPointDivergence, NotDiffeomorphism,
                             SmallnessViolation)
        labels = {SmallnessViolation: "smallness_violation",
                  FixedPointDivergence: "fixed_point_divergence",
                  NotDiffeomorphism: "not_diffeomorphism"}
        manifest.status = next(
            (label for cls, label in labels.items() if isinstance(exc, cls)),
            "io_error")
        manifest.message = str(exc)
        exit_code = 3
    finally:
        manifest.finished_at = _now()
        manifest.write(out_dir)
    return manifest, exit_code


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    manifest, code = run_from_config(
        cfg, config_dir=os.path.dirname(os.path.abspath(args.config)))
    print(f"status: {manifest.status}  snapshots: {len(manifest.snapshots)}  "
          f"output: {cfg.output_dir}")
    if manifest.message:
        print(manifest.message, file=sys.stderr)
    return code


def _cmd_check(args):
    try:
        cfg = load_config(args.config)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    from ._kernels import backend_name
    n_unknowns = 2 * cfg.n_r * cfg.n_theta
    cells = cfg.epsilon / (2.0 * np.pi / cfg.n_theta)
    print("configuration is valid")
    for key, value in _config_echo(cfg).items():
        print(f"  {key} = {value}")
    print(f"derived: velocity unknowns = {n_unknowns}")
    print(f"derived: steps = {int(round(cfg.t_end / cfg.dt))}")
    print(f"derived: mollifier half-width = {cells:.2f} boundary cells")
    print(f"derived: kernel backend = {backend_name()}")
    return 0


def _cmd_selftest(_args):
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001 - report, do not crash
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    def _geometry():
        from .geometry import ReferenceCurve, curvature
        curve = ReferenceCurve.unit_circle(128)
        c = curvature(np.zeros(128), curve)
        assert np.max(np.abs(c + 1.0)) < 1e-12

    def _mollifier():
        from .geometry import ReferenceCurve
        from .smoothing import mollify
        curve = ReferenceCurve.unit_circle(128)
        out = mollify(np.full(128, 2.5), 0.3, curve)
        assert np.max(np.abs(out - 2.5)) < 1e-12

    def _piola():
        from .ale_map import DiskGrid, harmonic_extend, piola_residual
        from .geometry import ReferenceCurve
        curve = ReferenceCurve.unit_circle(128)
        grid = DiskGrid(24, 128)
        h = np.full(128, 0.05)
        m = harmonic_extend(h, curve, grid)
        assert piola_residual(m, h, curve) < 1e-9

    def _equilibrium():
        cfg = SolverConfig(n_r=12, n_theta=48, dt=1e-3, t_end=3e-3)
        stepper = TimeStepper(cfg)
        result = stepper.run()
        assert result.status == "completed"
        wmax = np.max(np.abs(result.final.w))
        assert wmax <= 1e-6, f"equilibrium velocity {wmax:.2e}"

    check("circle curvature", _geometry)
    check("mollifier unit mass", _mollifier)
    check("piola identity", _piola)
    check("static-circle equilibrium", _equilibrium)

    failed = 0
    for name, ok, msg in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  {msg}" if msg else ""))
        failed += 0 if ok else 1
    return 0 if failed == 0 else 3


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="aleflow",
        description="free-boundary flow solver on a deforming disk")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a configured run")
    p_run.add_argument("config")
    p_run.set_defaults(fn=_cmd_run)
    p_check = sub.add_parser("check", help="validate a config and print "
                                           "derived parameters")
    p_check.add_argument("config")
    p_check.set_defaults(fn=_cmd_check)
    p_self = sub.add_parser("selftest", help="run built-in invariant checks")
    p_self.set_defaults(fn=_cmd_selftest)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
