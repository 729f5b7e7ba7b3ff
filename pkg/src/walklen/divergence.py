"""Generalized KL divergence, tolerance clipping, and inherent corpus noise.

The generalized divergence handles distributions whose supports do not
coincide: with lam the mass the first distribution puts on the shared
support, it is

    gkl(p, q) = -lam * ln(lam) + sum over shared support of p*ln(p/q)

which reduces to ordinary KL when the supports match. Disjoint supports
give lam = 0 and, by the x*ln(x) -> 0 convention, a divergence of 0; that
degenerate case is surfaced through a zero-overlap flag rather than
silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .histogram import empirical, split_halves

DistMap = Mapping[int, float]


@dataclass(frozen=True)
class Tolerance:
    """Divergence budget in nats; fits at or below it count as noise."""

    delta: float

    def __post_init__(self):
        if not (self.delta >= 0):
            raise ValueError(f"tolerance must be >= 0, got {self.delta}")


@dataclass
class NoiseEstimate:
    delta: float
    split_kind: str
    zero_overlap: bool = False


class GklParts(NamedTuple):
    total: float
    overlap_mass: float   # lam; 0 flags disjoint supports
    integral_term: float


def _check_distribution(d: DistMap, name: str) -> None:
    if not d:
        raise ValueError(f"{name} is empty")
    total = math.fsum(d.values())
    if any(v < 0 for v in d.values()):
        raise ValueError(f"{name} has negative entries")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {total}, not 1 within 1e-9")


def gkl_parts(p: DistMap, q: DistMap, validate: bool = True) -> GklParts:
    """gkl with its overlap mass exposed, for reports that flag zero overlap.

    validate=False skips the sums-to-one check; model distributions truncated
    to a finite support carry a small mass deficit by construction.
    """
    if validate:
        _check_distribution(p, "p")
        _check_distribution(q, "q")
    lam = 0.0
    integral = 0.0
    for x in sorted(p):
        px = p[x]
        if px <= 0:
            continue
        qx = q.get(x, 0.0)
        if qx > 0:
            lam += px
            integral += px * math.log(px / qx)
    if lam <= 0:
        return GklParts(0.0, 0.0, 0.0)
    return GklParts(-lam * math.log(lam) + integral, lam, integral)


def gkl(p: DistMap, q: DistMap, validate: bool = True) -> float:
    """Generalized KL divergence in nats."""
    return gkl_parts(p, q, validate=validate).total


def gkl_delta(p: DistMap, q: DistMap, tol: Tolerance, validate: bool = True) -> float:
    """Divergence beyond the tolerance: max(0, gkl - delta).

    A model is tolerable for the data exactly when this is 0.
    """
    return max(0.0, gkl(p, q, validate=validate) - tol.delta)


def tolerable(p: DistMap, q: DistMap, tol: Tolerance) -> bool:
    return gkl_delta(p, q, tol) == 0.0


def inherent_noise(
    lengths: Iterable[int],
    split: str = "first",
    seed: int = 0,
    cutoff: int = 10**9,
) -> NoiseEstimate:
    """Symmetrized gkl between the two halves of a length stream.

    split="first" compares the first half of the stream to the second;
    split="random" shuffles with the given seed before halving. The result
    is the precision floor below which fitting the corpus is meaningless.
    """
    if split not in ("first", "random"):
        raise ValueError(f"split must be 'first' or 'random', got {split!r}")
    randomized = split == "random"
    h1, h2 = split_halves(lengths, cutoff=cutoff, randomized=randomized, seed=seed)
    d1 = empirical(h1).probs
    d2 = empirical(h2).probs
    a = gkl_parts(d1, d2)
    b = gkl_parts(d2, d1)
    kind = f"random({seed})" if randomized else "first-second"
    return NoiseEstimate(
        delta=0.5 * (a.total + b.total),
        split_kind=kind,
        zero_overlap=(a.overlap_mass == 0.0 or b.overlap_mass == 0.0),
    )


def gkl_arrays(
    p: np.ndarray, ln_p: np.ndarray, q: np.ndarray, overlap_mass: float
) -> float:
    """Array form of gkl over a precomputed shared support.

    p, ln_p and q are aligned over the support points where both sides are
    positive; overlap_mass is the total p mass there. Used by the fitting
    loop, where the shared support is fixed per model family.
    """
    if overlap_mass <= 0:
        return 0.0
    integral = float(np.dot(p, ln_p - np.log(q)))
    return -overlap_mass * math.log(overlap_mass) + integral
