#!/usr/bin/env python3
"""Full pipeline on one corpus: stats, noise, 93 fits, comparison, MDL.

Input is either raw text (one sentence per line) or a precomputed
"length<TAB>count" TSV. Outputs land in one directory per corpus:

    stats.tsv        size / mean / p999 / max / bin masses
    noise.tsv        inherent noise from the half-split
    models/          93 fitted model files plus objectives.tsv
    comparison.tsv   evidence totals over the n grid, winners per n
    mdl.tsv          winner row: model_id mq nq tb pct_size

The tolerance defaults to the measured inherent noise, matching how the
shipped validation is scored.
"""

import argparse
import sys
from pathlib import Path

from walklen.cli import main as cli_main


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("corpus", help="text file, TSV histogram, or - for stdin")
    ap.add_argument("--tsv", action="store_true",
                    help="corpus is a length<TAB>count histogram")
    ap.add_argument("--cutoff", type=int, default=1000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tolerance", default="auto",
                    help="'auto' (measured), 0, or nats")
    ap.add_argument("--out", default=None,
                    help="output directory (default: results/<corpus name>)")
    args = ap.parse_args()

    name = Path(args.corpus).stem if args.corpus != "-" else "stdin"
    out = Path(args.out) if args.out else Path("results") / name
    out.mkdir(parents=True, exist_ok=True)
    fmt = ["--tsv"] if args.tsv else ["--text"]
    base = [args.corpus, *fmt, "--cutoff", str(args.cutoff)]

    steps = [
        ["stats", *base, "--out", str(out)],
        ["noise", *base, "--seed", str(args.seed), "--out", str(out)],
        ["fit", *base, "--seed", str(args.seed), "--jobs", str(args.jobs),
         "--out", str(out / "models")],
        ["compare", *base, "--fits", str(out / "models"),
         "--tolerance", args.tolerance, "--out", str(out)],
        ["mdl", *base, "--fits", str(out / "models"),
         "--tolerance", args.tolerance, "--out", str(out)],
    ]
    for argv in steps:
        print(f"== walklen {' '.join(argv)}", file=sys.stderr)
        code = cli_main(argv)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
