"""Command-line entry: render one figure from a JSON spec file."""

import argparse
import json
import sys
from pathlib import Path

from .figures import FigureSpec, PlotInputError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="statseek-plots",
        description="Render a figure from experiment CSV/JSON outputs.",
    )
    parser.add_argument(
        "--spec", required=True, help="JSON figure spec (kind, inputs, out)"
    )
    args = parser.parse_args(argv)
    try:
        spec_path = Path(args.spec)
        if not spec_path.exists():
            raise PlotInputError(f"spec file not found: {spec_path}")
        try:
            raw = json.loads(spec_path.read_text())
        except json.JSONDecodeError as exc:
            raise PlotInputError(f"{spec_path}: invalid JSON ({exc})") from None
        spec = FigureSpec.from_dict(raw)
        png, svg = render(spec)
    except PlotInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(png)
    print(svg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
