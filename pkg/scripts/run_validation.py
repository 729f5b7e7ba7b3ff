#!/usr/bin/env python3
"""Run the full synthetic validation and write its reports.

Draws samples from the known walk model (valency 3, steps 0.5/0.25/0.25),
fits all 93 templates, and writes the winners table, both comparison
reports, and the MDL report. With the defaults this reproduces the
shipped validation exactly; expect roughly 25 single-core minutes at the
full two-million-sample scale (use --jobs to spread the fits).
"""

import argparse
import sys
from pathlib import Path

from walklen.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=2_000_000)
    ap.add_argument("--seed", type=int, default=20260809)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/validation")
    args = ap.parse_args()
    Path(args.out).mkdir(parents=True, exist_ok=True)
    return cli_main([
        "validate",
        "--count", str(args.count),
        "--seed", str(args.seed),
        "--jobs", str(args.jobs),
        "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
