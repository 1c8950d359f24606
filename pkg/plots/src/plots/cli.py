"""Command-line front end: ``plots render --spec <file>``."""

from __future__ import annotations

import argparse
import sys

from .render import PlotError, load_spec, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots",
        description="Render figures from sweep CSV files.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one figure from a spec")
    p_render.add_argument("--spec", required=True,
                          help="INI file with a [plot] section")
    args = parser.parse_args(argv)
    try:
        path = render(load_spec(args.spec))
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
