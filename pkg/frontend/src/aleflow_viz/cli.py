"""Command line: aleflow-viz plot interface|energy <run_dir> [--times] [--out]."""

import argparse
import sys

from .plots import plot_energy, plot_interface
from .reader import MissingRunData, RunData


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="aleflow-viz",
        description="figures from a solver run directory (read-only)")
    sub = parser.add_subparsers(dest="command", required=True)
    p_plot = sub.add_parser("plot", help="render one figure")
    p_plot.add_argument("figure", choices=["interface", "energy"])
    p_plot.add_argument("run_dir")
    p_plot.add_argument("--times", type=float, nargs="+", default=None,
                        help="snapshot times for the interface overlay "
                             "(nearest match; defaults to all snapshots)")
    p_plot.add_argument("--out", default=None, help="output image path")
    args = parser.parse_args(argv)

    try:
        if args.figure == "interface":
            times = args.times
            if times is None:
                times = list(RunData(args.run_dir).available_times())
            result = plot_interface(args.run_dir, times,
                                    out_path=args.out or "interface.png")
        else:
            result = plot_energy(args.run_dir,
                                 out_path=args.out or "energy.png")
    except MissingRunData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result.path)
    for key, value in result.annotations.items():
        print(f"  {key}: {value}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
