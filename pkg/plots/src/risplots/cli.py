"""Script entry point: render all figures listed in a spec file."""

import argparse
import json
import sys

from .figures import render_spec_file


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="risplots",
        description="render figures from risloc CSV outputs")
    parser.add_argument("spec", help="JSON figure-spec file")
    args = parser.parse_args(argv)
    infos = render_spec_file(args.spec)
    print(json.dumps([{"output": i.output, "kind": i.kind,
                       "points": i.n_points} for i in infos]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
