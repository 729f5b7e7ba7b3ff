"""Length histograms: ingestion, empirical distributions, summary statistics.

A corpus is reduced to a multiset of positive sentence lengths (whitespace
token counts). Everything downstream works on these histograms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

DEFAULT_CUTOFF = 1000


class IngestError(ValueError):
    """Raised when an input stream cannot be parsed, with the offending line."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class LengthHistogram:
    """Counts of sentence lengths, all within 1..cutoff.

    Zero-count entries are never stored. `size` is the number of sentences.
    """

    counts: dict[int, int] = field(default_factory=dict)
    cutoff: int = DEFAULT_CUTOFF

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")
        for x, c in self.counts.items():
            if not (1 <= x <= self.cutoff):
                raise ValueError(f"length {x} outside 1..{self.cutoff}")
            if c < 1:
                raise ValueError(f"count for length {x} must be >= 1, got {c}")

    @property
    def size(self) -> int:
        return sum(self.counts.values())

    @property
    def max_length(self) -> int:
        return max(self.counts)

    def support(self) -> np.ndarray:
        """Sorted array of lengths with nonzero count."""
        return np.array(sorted(self.counts), dtype=np.int64)

    def count_array(self) -> np.ndarray:
        """Counts aligned with support()."""
        return np.array([self.counts[x] for x in sorted(self.counts)], dtype=np.int64)

    def add(self, length: int, count: int = 1) -> None:
        if not (1 <= length <= self.cutoff):
            raise ValueError(f"length {length} outside 1..{self.cutoff}")
        self.counts[length] = self.counts.get(length, 0) + count


@dataclass
class EmpiricalDistribution:
    """Observed length probabilities, p_x = n_x / n."""

    probs: dict[int, float]

    def __post_init__(self):
        if not self.probs:
            raise ValueError("empty distribution")
        if any(p <= 0 for p in self.probs.values()):
            raise ValueError("all probabilities must be positive")
        total = math.fsum(self.probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1")

    def support(self) -> np.ndarray:
        return np.array(sorted(self.probs), dtype=np.int64)

    def prob_array(self) -> np.ndarray:
        """Probabilities aligned with support()."""
        return np.array([self.probs[x] for x in sorted(self.probs)], dtype=np.float64)

    @property
    def max_length(self) -> int:
        return max(self.probs)


@dataclass
class SummaryStats:
    size: int
    mean: float
    p999: int
    max: int
    low_bin_mass: float   # fraction with length <= 4
    high_bin_mass: float  # fraction with length >= 71


class IngestResult(NamedTuple):
    histogram: LengthHistogram
    skipped: int
    # Mean over every admissible record seen, including those dropped by the
    # cutoff; equals the histogram mean when nothing was dropped.
    uncut_mean: float


class TailFit(NamedTuple):
    exponent: float   # C in counts ~ length^{-C}; positive means decay
    r_squared: float
    n_points: int


def ingest_text(lines: Iterable[str], cutoff: int = DEFAULT_CUTOFF) -> IngestResult:
    """Build a histogram from sentences, one per line, tokenized on whitespace.

    Empty lines and lines longer than `cutoff` tokens are dropped and tallied
    in the skip counter.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    counts: dict[int, int] = {}
    skipped = 0
    total_len = 0
    total_n = 0
    line_no = 0
    try:
        for line in lines:
            line_no += 1
            n_tokens = len(line.split())
            if n_tokens >= 1:
                total_len += n_tokens
                total_n += 1
            if 1 <= n_tokens <= cutoff:
                counts[n_tokens] = counts.get(n_tokens, 0) + 1
            else:
                skipped += 1
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"unreadable input: {exc}", line_no + 1) from exc
    uncut = total_len / total_n if total_n else float("nan")
    return IngestResult(LengthHistogram(counts, cutoff), skipped, uncut)


def ingest_tsv(rows: Iterable[str], cutoff: int = DEFAULT_CUTOFF) -> IngestResult:
    """Build a histogram from "length<TAB>count" records.

    Duplicate lengths are merged; lengths above `cutoff` are dropped with
    their counts added to the skip tally. Malformed rows raise IngestError.
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    counts: dict[int, int] = {}
    skipped = 0
    total_len = 0
    total_n = 0
    for row_no, row in enumerate(rows, start=1):
        line = row.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise IngestError(f"expected 2 tab-separated fields, got {len(parts)}", row_no)
        try:
            length = int(parts[0])
            count = int(parts[1])
        except ValueError as exc:
            raise IngestError(f"non-integer field in {line!r}", row_no) from exc
        if length <= 0:
            raise IngestError(f"length must be positive, got {length}", row_no)
        if count <= 0:
            raise IngestError(f"count must be positive, got {count}", row_no)
        total_len += length * count
        total_n += count
        if length <= cutoff:
            counts[length] = counts.get(length, 0) + count
        else:
            skipped += count
    uncut = total_len / total_n if total_n else float("nan")
    return IngestResult(LengthHistogram(counts, cutoff), skipped, uncut)


def histogram_from_lengths(lengths: Iterable[int], cutoff: int = DEFAULT_CUTOFF) -> IngestResult:
    """Histogram from raw length records, dropping those above the cutoff."""
    counts: dict[int, int] = {}
    skipped = 0
    total_len = 0
    total_n = 0
    for x in lengths:
        x = int(x)
        if x < 1:
            raise ValueError(f"length must be >= 1, got {x}")
        total_len += x
        total_n += 1
        if x <= cutoff:
            counts[x] = counts.get(x, 0) + 1
        else:
            skipped += 1
    uncut = total_len / total_n if total_n else float("nan")
    return IngestResult(LengthHistogram(counts, cutoff), skipped, uncut)


def empirical(h: LengthHistogram) -> EmpiricalDistribution:
    """Observed probabilities p_x = n_x / n."""
    n = h.size
    if n == 0:
        raise ValueError("empty histogram")
    return EmpiricalDistribution({x: c / n for x, c in sorted(h.counts.items())})


def summary(h: LengthHistogram) -> SummaryStats:
    """Size, mean, 99.9th percentile, max, and the low/high bin masses.

    The low bin is lengths 1..4, the high bin 71 and above. p999 is the
    smallest length whose cumulative mass reaches 0.999 (no interpolation,
    the support is integer).
    """
    n = h.size
    if n == 0:
        raise ValueError("empty histogram")
    xs = h.support()
    cs = h.count_array()
    mean = float(np.dot(xs, cs)) / n
    cum = np.cumsum(cs)
    p999 = int(xs[np.searchsorted(cum / n, 0.999, side="left")])
    low = int(cs[xs <= 4].sum()) / n
    high = int(cs[xs >= 71].sum()) / n
    return SummaryStats(size=n, mean=mean, p999=p999, max=int(xs[-1]),
                        low_bin_mass=low, high_bin_mass=high)


def deciles(h: LengthHistogram) -> list[int]:
    """Ten decile boundaries: the j-th is the smallest length holding j/10 of
    the mass. Diagnostic only, fitting is unbinned."""
    n = h.size
    if n == 0:
        raise ValueError("empty histogram")
    xs = h.support()
    cum = np.cumsum(h.count_array())
    bounds = []
    for j in range(1, 11):
        target = j * n / 10.0
        idx = int(np.searchsorted(cum, target, side="left"))
        idx = min(idx, len(xs) - 1)
        bounds.append(int(xs[idx]))
    return bounds


def split_halves(
    lengths: Iterable[int],
    cutoff: int = DEFAULT_CUTOFF,
    randomized: bool = False,
    seed: int = 0,
) -> tuple[LengthHistogram, LengthHistogram]:
    """Split an ordered length stream into first ceil(N/2) records vs the rest.

    With randomized=True the stream is shuffled (seeded) before splitting.
    """
    arr = np.asarray(list(lengths), dtype=np.int64)
    if arr.size < 2:
        raise ValueError(f"need at least 2 records to split, got {arr.size}")
    if randomized:
        rng = np.random.default_rng(seed)
        arr = rng.permutation(arr)
    half = (arr.size + 1) // 2
    first = histogram_from_lengths(arr[:half], cutoff).histogram
    second = histogram_from_lengths(arr[half:], cutoff).histogram
    return first, second


def percentile_length(h: LengthHistogram, q: float) -> int:
    """Smallest length whose cumulative mass reaches q."""
    xs = h.support()
    cum = np.cumsum(h.count_array())
    idx = int(np.searchsorted(cum / h.size, q, side="left"))
    return int(xs[min(idx, len(xs) - 1)])


def tail_exponent(h: LengthHistogram, tail_start: int | None = None) -> TailFit:
    """Least-squares decay exponent of the histogram tail.

    Fits ln(count) against ln(length) over lengths >= tail_start (default:
    the 99th-percentile length) and reports C, the negated slope, together
    with the R-squared of the line. Low R-squared flags a tail that is not
    power-like. Needs at least 5 distinct tail lengths.
    """
    if h.size == 0:
        raise ValueError("empty histogram")
    if tail_start is None:
        tail_start = percentile_length(h, 0.99)
    xs = h.support()
    mask = xs >= tail_start
    tail_x = xs[mask]
    if tail_x.size < 5:
        raise ValueError(
            f"need at least 5 distinct lengths >= {tail_start}, got {tail_x.size}"
        )
    tail_c = h.count_array()[mask]
    lx = np.log(tail_x.astype(np.float64))
    lc = np.log(tail_c.astype(np.float64))
    slope, intercept = np.polyfit(lx, lc, 1)
    resid = lc - (slope * lx + intercept)
    ss_tot = float(np.sum((lc - lc.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return TailFit(exponent=float(-slope), r_squared=r2, n_points=int(tail_x.size))


SUMMARY_TSV_HEADER = "size\tmean\tp999\tmax\tlow_mass\thigh_mass\tmean_uncut"


def summary_tsv(stats: SummaryStats, uncut_mean: float | None = None) -> str:
    """Two-line TSV rendering of SummaryStats.

    mean_uncut is the pre-cutoff mean when the ingest stream is available,
    otherwise it repeats the post-cutoff mean.
    """
    if uncut_mean is None or math.isnan(uncut_mean):
        uncut_mean = stats.mean
    row = (
        f"{stats.size}\t{stats.mean:.6g}\t{stats.p999}\t{stats.max}"
        f"\t{stats.low_bin_mass:.6g}\t{stats.high_bin_mass:.6g}\t{uncut_mean:.6g}"
    )
    return SUMMARY_TSV_HEADER + "\n" + row + "\n"


def write_histogram_tsv(h: LengthHistogram) -> str:
    """Render as "length<TAB>count" rows in ascending length order."""
    return "".join(f"{x}\t{h.counts[x]}\n" for x in sorted(h.counts))


def iter_lengths(h: LengthHistogram) -> Iterator[int]:
    """Expand the histogram back to one record per sentence (ascending)."""
    for x in sorted(h.counts):
        for _ in range(h.counts[x]):
            yield x
