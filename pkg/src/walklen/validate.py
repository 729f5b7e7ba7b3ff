"""End-to-end synthetic validation of the model-comparison machinery.

Draws walk samples from a known single-component model (total valency 3,
steps 0.5 / 0.25 / 0.25), measures the inherent noise of the sample, fits
the full 93-template family, and runs the Bayesian comparison over a grid
of effective sample sizes, with and without the tolerance and with and
without the true template in the field. The MDL comparison runs on the
same fits. The known generator should win everywhere the sample size is
not severely understated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .divergence import NoiseEstimate, Tolerance, inherent_noise
from .evidence import DEFAULT_N_GRID, ComparisonReport, _n_label, compare
from .fit import FitAllResult, FitConfig, fit_all
from .histogram import empirical, histogram_from_lengths
from .mdl import MdlReport, mdl_compare
from .walk import MixtureModel, StepLaw, WalkComponent, sample_lengths, seed_stream

TRUE_MODEL = MixtureModel(
    (WalkComponent(3, StepLaw(1, (0.5, 0.25, 0.25))),), (1.0,)
)
DEFAULT_COUNT = 2_000_000
DEFAULT_SEED = 20260809


@dataclass
class ValidationReport:
    count: int
    seed: int
    cutoff: int
    noise: NoiseEstimate
    n_grid: tuple[float, ...]
    fits: FitAllResult
    comparison: ComparisonReport
    comparison_excl: ComparisonReport
    mdl: MdlReport
    mdl_excl: MdlReport
    phase_seconds: dict[str, float] = field(default_factory=dict)

    @property
    def tolerance(self) -> float:
        return self.noise.delta

    def winners_table(self) -> dict[str, dict[float, str]]:
        return {
            "with_tolerance": self.comparison.winners_with_tol,
            "without_tolerance": self.comparison.winners_without_tol,
            "with_tolerance_true_excluded": self.comparison_excl.winners_with_tol,
            "without_tolerance_true_excluded": self.comparison_excl.winners_without_tol,
        }

    def to_tsv(self) -> str:
        lines = ["scenario\t" + "\t".join(f"n={_n_label(n)}" for n in self.n_grid)]
        for name, winners in self.winners_table().items():
            lines.append(name + "\t" + "\t".join(winners[n] for n in self.n_grid))
        lines.append(f"inherent_noise_nats\t{self.noise.delta:.6g}")
        lines.append(f"noise_split\t{self.noise.split_kind}")
        lines.append(f"sample_count\t{self.count}")
        lines.append(f"seed\t{self.seed}")
        lines.append(f"mdl_winner\t{self.mdl.winner_id}")
        if self.mdl.winner is not None:
            lines.append(f"mdl_winner_bits_per_param\t{self.mdl.winner.bits_per_param}")
            lines.append(f"mdl_winner_total_bits\t{self.mdl.winner.total_bits}")
        lines.append(f"mdl_winner_true_excluded\t{self.mdl_excl.winner_id}")
        if self.mdl.naive is not None:
            lines.append(f"naive_bits_per_param\t{self.mdl.naive.bits_per_param}")
            lines.append(f"naive_total_bits\t{self.mdl.naive.total_bits}")
            if self.mdl.winner is not None and self.mdl.naive.total_bits > 0:
                pct = 100.0 * self.mdl.winner.total_bits / self.mdl.naive.total_bits
                lines.append(f"pct_size\t{pct:.2f}")
        for phase, secs in self.phase_seconds.items():
            lines.append(f"seconds_{phase}\t{secs:.1f}")
        return "\n".join(lines) + "\n"


def run_validation(
    count: int = DEFAULT_COUNT,
    seed: int = DEFAULT_SEED,
    cfg: FitConfig = FitConfig(),
    n_grid: tuple[float, ...] = DEFAULT_N_GRID,
    cutoff: int = 1000,
    jobs: int = 1,
    true_model: MixtureModel = TRUE_MODEL,
) -> ValidationReport:
    """Sample, measure noise, fit all 93 templates, compare, and report."""
    timings: dict[str, float] = {}
    t0 = time.monotonic()
    lengths, _ = sample_lengths(true_model, count, seed_stream(seed, 0))
    hist = histogram_from_lengths(lengths, cutoff).histogram
    noise = inherent_noise(lengths, cutoff=cutoff)
    data = empirical(hist)
    timings["sample"] = time.monotonic() - t0

    t0 = time.monotonic()
    fits = fit_all(data, cfg, jobs=jobs)
    timings["fit"] = time.monotonic() - t0

    tol = Tolerance(noise.delta)
    true_id = true_model.id
    others = [r for r in fits.results if r.model.id != true_id]
    t0 = time.monotonic()
    comparison = compare(data, fits.results, tol, n_grid)
    comparison_excl = compare(data, others, tol, n_grid)
    timings["compare"] = time.monotonic() - t0

    t0 = time.monotonic()
    mdl_report = mdl_compare(data, fits.results, tol)
    mdl_excl = mdl_compare(data, others, tol)
    timings["mdl"] = time.monotonic() - t0

    return ValidationReport(
        count=count,
        seed=seed,
        cutoff=cutoff,
        noise=noise,
        n_grid=tuple(n_grid),
        fits=fits,
        comparison=comparison,
        comparison_excl=comparison_excl,
        mdl=mdl_report,
        mdl_excl=mdl_excl,
        phase_seconds=timings,
    )
