"""bivi-plot: render solver CSV outputs into figures.

Kinds: ``error`` (a log-scale metric series from records.csv), ``traj``
(2-D iterate path), ``compare`` (one series per sweep variant from
compare.csv).
"""

from __future__ import annotations

import argparse
import sys

from .io import TableError
from .plots import SeriesSpec, plot_compare, plot_series, plot_trajectory


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bivi-plot",
                                     description="plot bivi records/compare CSV files")
    parser.add_argument("--records", required=True, help="records.csv or compare.csv")
    parser.add_argument("--kind", required=True, choices=["error", "traj", "compare"])
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--columns", nargs="*", default=None,
                        help="columns for --kind error (default err_known)")
    parser.add_argument("--scale", choices=["linear", "log-y"], default="log-y")
    parser.add_argument("--dims", default="0,1", help="i,j components for --kind traj")
    parser.add_argument("--metric", default="D", help="metric for --kind compare")
    parser.add_argument("--title", default="")
    args = parser.parse_args(argv)

    try:
        if args.kind == "error":
            spec = SeriesSpec(input_path=args.records,
                              columns=args.columns or ["err_known"],
                              scale=args.scale, title=args.title,
                              output_path=args.out)
            info = plot_series(spec)
        elif args.kind == "traj":
            i, j = (int(v) for v in args.dims.split(","))
            info = plot_trajectory(args.records, dims=(i, j),
                                   output_path=args.out, title=args.title)
        else:
            info = plot_compare(args.records, metric=args.metric, scale=args.scale,
                                output_path=args.out, title=args.title)
    except (TableError, ValueError) as exc:
        print(f"bivi-plot: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info['path']} ({info['series']} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
