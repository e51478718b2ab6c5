"""Command-line entry point.

Exit codes: 0 success, 1 some images were skipped (listed in the
sidecar failures file) or another runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

from .codec import FormatError
from .extract import ExtractorConfig, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctfeat",
        description="Extract frozen ResNet-50 features into a QCNF feature file",
    )
    parser.add_argument("--manifest", required=True, help="CSV with id,path,label rows")
    parser.add_argument("--out", required=True, help="output .qcnf feature file")
    parser.add_argument("--batch", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--weights", default=None,
                        help="local backbone state-dict file (random frozen init if absent)")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        config = ExtractorConfig(
            manifest=args.manifest, out=args.out, batch_size=args.batch,
            device=args.device, weights=args.weights, seed=args.seed,
        )
        written, failures = extract(config)
    except (FormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    if failures:
        print(f"{written} records written, {len(failures)} images skipped "
              f"(see {args.out}.failures.csv sidecar)", file=sys.stderr)
        return 1
    print(f"{written} records written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
