"""render: turn bridgemark CSV outputs into figures.

Usage: render <kind> --in PATH [--in PATH ...] --out PATH
"""

from __future__ import annotations

import argparse
import sys

from .io import SchemaError
from .render import KINDS, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="render", description=__doc__)
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="PATH", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--times", default=None,
                        help="comma-separated snapshot times (bridge_snapshots)")
    args = parser.parse_args(argv)

    kwargs = {}
    if args.times is not None:
        if args.kind != "bridge_snapshots":
            parser.error("--times only applies to bridge_snapshots")
        try:
            kwargs["times"] = tuple(float(x) for x in args.times.split(","))
        except ValueError:
            parser.error(f"cannot parse --times {args.times!r}")
    try:
        info = render(args.kind, args.inputs, args.out, **kwargs)
    except SchemaError as exc:
        print(f"render {args.kind}: error: {exc}", file=sys.stderr)
        return 1
    print(f"render {args.kind}: wrote {args.out} ({info})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
