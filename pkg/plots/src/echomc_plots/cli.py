"""plots render --figure ID --in DIR --out PATH"""
from __future__ import annotations

import argparse
import sys

from .figures import RENDERERS, FigureSpec, inputs_for, render
from .schema import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots",
                                     description="Render figures from simulation results")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure")
    r.add_argument("--figure", required=True, choices=sorted(RENDERERS),
                   help="figure id")
    r.add_argument("--in", dest="in_dir", required=True, metavar="DIR",
                   help="results directory (conventional layout)")
    r.add_argument("--out", required=True, metavar="PATH", help="output image path")
    sub.add_parser("list", help="list figure ids")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in sorted(RENDERERS):
            print(name)
        return 0
    try:
        spec = FigureSpec(figure=args.figure,
                          inputs=inputs_for(args.figure, args.in_dir),
                          output=args.out)
        out = render(spec)
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
