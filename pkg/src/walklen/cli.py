"""Batch command-line frontend.

Subcommands: stats, noise, fit, compare, mdl, sample, validate. Inputs are
UTF-8 text (one sentence per line) or TSV "length<TAB>count" histograms.
All outputs are TSV with header rows; fitted models use the key-value
model format. Every command is deterministic given its inputs and seed;
when an output directory is given, a manifest recording the run settings
is written next to the files.

Exit codes: 0 success, 1 input error, 2 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .divergence import Tolerance, inherent_noise
from .evidence import DEFAULT_N_GRID, compare
from .fit import FitConfig, FitDivergedError, fit, fit_all, result_from_model
from .histogram import (
    DEFAULT_CUTOFF,
    IngestError,
    IngestResult,
    ingest_text,
    ingest_tsv,
    iter_lengths,
    summary,
    summary_tsv,
    write_histogram_tsv,
)
from .mdl import mdl_compare
from .validate import DEFAULT_COUNT, DEFAULT_SEED, run_validation
from .walk import load_model, parse_model_id, sample, save_model, seed_stream
from . import histogram as hg


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise InputError(f"{self.prog}: {message}")


@dataclass
class RunManifest:
    """Everything that determines a run's outputs, plus a timestamp."""

    command: str
    inputs: list[str]
    cutoff: int | None = None
    seed: int | None = None
    tolerance_source: str | None = None
    n_grid: list[str] | None = None
    timestamp: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _emit(text: str, out: Path | None, name: str) -> None:
    sys.stdout.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def _write_manifest(out: Path | None, manifest: RunManifest) -> None:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")


def _read_lines(path: str):
    if path == "-":
        return sys.stdin
    p = Path(path)
    if not p.exists():
        raise InputError(f"input file not found: {path}")
    return p.open(encoding="utf-8")


def _ingest(path: str, fmt: str, cutoff: int) -> IngestResult:
    with _read_lines(path) as fh:
        if fmt == "tsv":
            return ingest_tsv(fh, cutoff)
        return ingest_text(fh, cutoff)


def _input_flags(p: _Parser) -> None:
    p.add_argument("input", help="input file, or - for stdin")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--text", dest="fmt", action="store_const", const="text",
                     help="one sentence per line (default)")
    fmt.add_argument("--tsv", dest="fmt", action="store_const", const="tsv",
                     help="length<TAB>count rows")
    p.set_defaults(fmt="text")
    p.add_argument("--cutoff", type=int, default=DEFAULT_CUTOFF,
                   help="drop sentences longer than this many tokens")


def _parse_n_grid(text: str) -> tuple[float, ...]:
    grid = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        if tok in ("inf", "infinity"):
            grid.append(math.inf)
        else:
            try:
                grid.append(float(tok) if math.isinf(float(tok)) else int(float(tok)))
            except ValueError as exc:
                raise InputError(f"bad n-grid entry {tok!r}") from exc
    if not grid:
        raise InputError("empty n-grid")
    return tuple(grid)


def _n_grid_labels(grid) -> list[str]:
    return ["inf" if math.isinf(n) else str(int(n)) for n in grid]


def _resolve_tolerance(spec: str, ingest: IngestResult, args) -> tuple[Tolerance, str]:
    if spec == "auto":
        est = inherent_noise(
            iter_lengths(ingest.histogram), split=args.split,
            seed=args.seed, cutoff=args.cutoff,
        )
        return Tolerance(est.delta), "measured"
    try:
        return Tolerance(float(spec)), "explicit"
    except ValueError as exc:
        raise InputError(f"--tolerance must be 'auto' or a number, got {spec!r}") from exc


def _load_fitted(fits_dir: str, data) -> list:
    d = Path(fits_dir)
    if not d.is_dir():
        raise InputError(f"fitted-model directory not found: {fits_dir}")
    paths = sorted(d.glob("*.model"))
    if not paths:
        raise InputError(f"no *.model files in {fits_dir}")
    return [result_from_model(data, load_model(p)) for p in paths]


def cmd_stats(args) -> int:
    res = _ingest(args.input, args.fmt, args.cutoff)
    if res.histogram.size == 0:
        raise InputError("input holds no admissible sentences")
    text = summary_tsv(summary(res.histogram), res.uncut_mean)
    out = Path(args.out) if args.out else None
    _emit(text, out, "stats.tsv")
    if res.skipped:
        print(f"skipped {res.skipped} records beyond cutoff {args.cutoff}",
              file=sys.stderr)
    _write_manifest(out, RunManifest(
        command="stats", inputs=[args.input], cutoff=args.cutoff,
        timestamp=_timestamp(),
    ))
    return 0


def cmd_noise(args) -> int:
    res = _ingest(args.input, args.fmt, args.cutoff)
    if args.fmt == "tsv" and args.split == "first":
        print("note: TSV input has no record order; the first/second split "
              "follows ascending lengths", file=sys.stderr)
    est = inherent_noise(iter_lengths(res.histogram), split=args.split,
                         seed=args.seed, cutoff=args.cutoff)
    text = "delta_nats\tsplit\tzero_overlap\n" + (
        f"{est.delta:.6g}\t{est.split_kind}\t{int(est.zero_overlap)}\n"
    )
    out = Path(args.out) if args.out else None
    _emit(text, out, "noise.tsv")
    _write_manifest(out, RunManifest(
        command="noise", inputs=[args.input], cutoff=args.cutoff,
        seed=args.seed, timestamp=_timestamp(),
        extra={"split": args.split},
    ))
    return 0


def cmd_fit(args) -> int:
    res = _ingest(args.input, args.fmt, args.cutoff)
    if res.histogram.size == 0:
        raise InputError("input holds no admissible sentences")
    data = hg.empirical(res.histogram)
    cfg = FitConfig(learning_rate=args.eta, grad_tol=args.grad_tol,
                    max_iters=args.max_iters, fallback_iters=args.fallback_iters,
                    seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model:
        template = parse_model_id(args.model)
        results, failures = [fit(data, template, cfg)], []
    else:
        all_out = fit_all(data, cfg, jobs=args.jobs)
        results, failures = all_out.results, all_out.failures
    lines = ["model_id\tobjective\titers\tconverged\tused_fallback"]
    for r in results:
        save_model(r.model, out / f"{r.id}.model")
        lines.append(f"{r.id}\t{r.objective:.17g}\t{r.iters}"
                     f"\t{int(r.converged)}\t{int(r.used_fallback)}")
    for f in failures:
        lines.append(f"{f.template_id}\tfailed\t0\t0\t0")
        print(f"fit failed for {f.template_id}: {f.error}", file=sys.stderr)
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    (out / "objectives.tsv").write_text(text, encoding="utf-8")
    _write_manifest(out, RunManifest(
        command="fit", inputs=[args.input], cutoff=args.cutoff, seed=args.seed,
        timestamp=_timestamp(),
        extra={"eta": args.eta, "grad_tol": args.grad_tol,
               "max_iters": args.max_iters,
               "model": args.model or "all", "jobs": args.jobs},
    ))
    return 0


def cmd_compare(args) -> int:
    res = _ingest(args.input, args.fmt, args.cutoff)
    data = hg.empirical(res.histogram)
    tol, source = _resolve_tolerance(args.tolerance, res, args)
    fits = _load_fitted(args.fits, data)
    grid = _parse_n_grid(args.n_grid)
    report = compare(data, fits, tol, grid)
    out = Path(args.out) if args.out else None
    _emit(report.to_tsv(), out, "comparison.tsv")
    _write_manifest(out, RunManifest(
        command="compare", inputs=[args.input, args.fits], cutoff=args.cutoff,
        seed=args.seed, tolerance_source=source,
        n_grid=_n_grid_labels(grid), timestamp=_timestamp(),
        extra={"tolerance_nats": tol.delta},
    ))
    return 0


def cmd_mdl(args) -> int:
    res = _ingest(args.input, args.fmt, args.cutoff)
    data = hg.empirical(res.histogram)
    tol, source = _resolve_tolerance(args.tolerance, res, args)
    fits = _load_fitted(args.fits, data)
    report = mdl_compare(data, fits, tol)
    out = Path(args.out) if args.out else None
    _emit(report.to_tsv(), out, "mdl.tsv")
    _write_manifest(out, RunManifest(
        command="mdl", inputs=[args.input, args.fits], cutoff=args.cutoff,
        seed=args.seed, tolerance_source=source, timestamp=_timestamp(),
        extra={"tolerance_nats": tol.delta},
    ))
    return 0


def cmd_sample(args) -> int:
    model_path = Path(args.model)
    if not model_path.exists():
        raise InputError(f"model file not found: {args.model}")
    try:
        model = load_model(model_path)
    except ValueError as exc:
        raise InputError(f"bad model file {args.model}: {exc}") from exc
    res = sample(model, args.count, seed_stream(args.seed, 0),
                 max_steps=args.max_steps)
    out = Path(args.out) if args.out else None
    _emit(write_histogram_tsv(res.histogram), out, "sample.tsv")
    if res.rejected:
        print(f"{res.rejected} walks exceeded {args.max_steps} steps "
              "and were re-drawn", file=sys.stderr)
    _write_manifest(out, RunManifest(
        command="sample", inputs=[args.model], seed=args.seed,
        timestamp=_timestamp(),
        extra={"count": args.count, "max_steps": args.max_steps},
    ))
    return 0


def cmd_validate(args) -> int:
    grid = _parse_n_grid(args.n_grid)
    cfg = FitConfig(learning_rate=args.eta, grad_tol=args.grad_tol,
                    max_iters=args.max_iters, fallback_iters=args.fallback_iters,
                    seed=args.seed)
    report = run_validation(count=args.count, seed=args.seed, cfg=cfg,
                            n_grid=grid, jobs=args.jobs)
    out = Path(args.out) if args.out else None
    _emit(report.to_tsv(), out, "validation.tsv")
    if out is not None:
        (out / "comparison.tsv").write_text(report.comparison.to_tsv(),
                                            encoding="utf-8")
        (out / "comparison_true_excluded.tsv").write_text(
            report.comparison_excl.to_tsv(), encoding="utf-8")
        (out / "mdl.tsv").write_text(report.mdl.to_tsv(), encoding="utf-8")
    _write_manifest(out, RunManifest(
        command="validate", inputs=[], seed=args.seed,
        tolerance_source="measured", n_grid=_n_grid_labels(grid),
        timestamp=_timestamp(),
        extra={"count": args.count, "eta": args.eta,
               "grad_tol": args.grad_tol, "max_iters": args.max_iters,
               "jobs": args.jobs},
    ))
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="walklen",
                description="sentence-length modeling via walk return times")
    p.add_argument("--version", action="version", version=f"walklen {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stats", parents=[], help="summary statistics TSV")
    _input_flags(sp)
    sp.add_argument("--out", help="directory for stats.tsv and the manifest")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("noise", help="inherent noise of a corpus")
    _input_flags(sp)
    sp.add_argument("--split", choices=["first", "random"], default="first")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_noise)

    sp = sub.add_parser("fit", help="fit one template or the whole family")
    _input_flags(sp)
    sp.add_argument("--model", help="model id such as 1.k2.3 (default: all 93)")
    sp.add_argument("--all", action="store_true",
                    help="fit all 93 templates (default when --model absent)")
    sp.add_argument("--eta", type=float, default=FitConfig.learning_rate)
    sp.add_argument("--grad-tol", type=float, default=FitConfig.grad_tol)
    sp.add_argument("--max-iters", type=int, default=FitConfig.max_iters)
    sp.add_argument("--fallback-iters", type=int, default=FitConfig.fallback_iters)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", required=True,
                    help="directory for model files and objectives.tsv")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("compare", help="Bayesian evidence comparison")
    _input_flags(sp)
    sp.add_argument("--fits", required=True, help="directory of *.model files")
    sp.add_argument("--tolerance", default="auto",
                    help="'auto' (measure from the input), 0, or nats")
    sp.add_argument("--n-grid",
                    default=",".join(_n_grid_labels(DEFAULT_N_GRID)))
    sp.add_argument("--split", choices=["first", "random"], default="first",
                    help="half-split used when --tolerance auto")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("mdl", help="minimum-description-length comparison")
    _input_flags(sp)
    sp.add_argument("--fits", required=True)
    sp.add_argument("--tolerance", default="auto")
    sp.add_argument("--split", choices=["first", "random"], default="first")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_mdl)

    sp = sub.add_parser("sample", help="draw lengths from a stored model")
    sp.add_argument("--model", required=True, help="model file")
    sp.add_argument("--count", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-steps", type=int, default=10_000_000)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("validate",
                        help="synthetic end-to-end check of the pipeline")
    sp.add_argument("--count", type=int, default=DEFAULT_COUNT)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--eta", type=float, default=FitConfig.learning_rate)
    sp.add_argument("--grad-tol", type=float, default=FitConfig.grad_tol)
    sp.add_argument("--max-iters", type=int, default=FitConfig.max_iters)
    sp.add_argument("--fallback-iters", type=int, default=FitConfig.fallback_iters)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--n-grid",
                    default=",".join(_n_grid_labels(DEFAULT_N_GRID)))
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (InputError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FitDivergedError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
