"""Command-line entry point: render one figure from flags or a spec file."""

from __future__ import annotations

import argparse
import sys

from .figures import CURVE_METRICS, KINDS, FigureSpec, PlotError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoc-plots",
        description="Render figures from run CSVs (one figure per invocation).",
    )
    parser.add_argument("spec", nargs="?", help="JSON FigureSpec file")
    parser.add_argument("--kind", choices=KINDS, help="figure kind")
    parser.add_argument("--input", help="input CSV from a run directory")
    parser.add_argument("--layout", help="layout.csv (heatmap and usage kinds)")
    parser.add_argument("--out", help="output image path")
    parser.add_argument("--band-k", type=float, default=0.5,
                        help="shaded band half-width in std units (default 0.5)")
    parser.add_argument("--metric", choices=CURVE_METRICS, default="length",
                        help="curve metric (default length)")
    parser.add_argument("--title", help="figure title")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.spec:
            spec = FigureSpec.from_json(args.spec)
        else:
            missing = [f for f in ("kind", "input", "out") if not getattr(args, f)]
            if missing:
                parser.error(f"missing {', '.join('--' + m for m in missing)} "
                             "(or pass a spec file)")
            spec = FigureSpec(
                kind=args.kind,
                input=args.input,
                out=args.out,
                layout=args.layout,
                band_k=args.band_k,
                metric=args.metric,
                title=args.title,
            )
        out = render(spec)
    except PlotError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
