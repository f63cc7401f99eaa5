"""Command-line entry point: render figures from estimation-run artifacts.

Usage::

    switchsmooth-plots render --run out/linear_pos --kind states --out states.png
"""

from __future__ import annotations

import argparse
import sys

from .errors import PlotsError
from .figures import KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchsmooth-plots",
        description="Render figures from switchsmooth run artifacts (CSV/JSON).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render one figure from a run directory")
    p_render.add_argument("--run", required=True, help="run directory (ablation "
                          "directory for ablation_table and overlaid convergence)")
    p_render.add_argument("--kind", required=True, choices=KINDS)
    p_render.add_argument("--out", required=True, help="output image path")
    p_render.add_argument("--format", default="", help="image format "
                          "(default: taken from the output suffix)")
    p_render.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            run=args.run,
            kind=args.kind,
            out=args.out,
            image_format=args.format,
            dpi=args.dpi,
        )
        path = render(spec)
    except (PlotsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
