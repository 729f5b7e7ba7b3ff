"""Minimum-description-length comparison via log-scale quantization.

Every continuous parameter (each component's step probabilities, the
mixture weights when there are at least two components, and the auxiliary
probabilities when there are at least two uncovered lengths) is snapped to
the nearest point of a 2^b-point grid, uniform in log space over
[2^-16, 1], and each simplex block is renormalized afterwards. The model
needing the fewest bits while staying within the divergence tolerance
wins. Blocks with a single entry are forced to 1 by normalization and cost
no bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .divergence import Tolerance, gkl_parts
from .evidence import augment
from .fit import FitResult
from .histogram import EmpiricalDistribution
from .walk import MixtureModel, StepLaw, WalkComponent, mixture_pmf

GRID_LOG_LO = -16.0 * math.log(2.0)   # ln of the smallest representable value
MAX_BITS = 16
# self-delimiting structural cost: 2 bits order, 5 valency bitmap, 4 aux size cap
HEADER_BITS = 2 + 5 + 4


@dataclass
class QuantizedModel:
    structure: str
    codes: tuple[int, ...]
    bits_per_param: int
    total_bits: int
    model: MixtureModel          # dequantized and renormalized
    aux: dict[int, float]        # dequantized auxiliary distribution

    @property
    def n_params(self) -> int:
        return len(self.codes)


class NaiveBits(NamedTuple):
    bits_per_param: int
    total_bits: int
    n_params: int


def _grid(bits: int, log_lo: float = GRID_LOG_LO) -> np.ndarray:
    if not (1 <= bits <= MAX_BITS):
        raise ValueError(f"bits must be in 1..{MAX_BITS}, got {bits}")
    n = 1 << bits
    return log_lo * (1.0 - np.arange(n) / (n - 1))


def encode_block(values: np.ndarray, bits: int, log_lo: float = GRID_LOG_LO) -> np.ndarray:
    """Nearest grid codes for one simplex block, clamping into the grid range."""
    n = 1 << bits
    step = -log_lo / (n - 1)
    logs = np.log(np.clip(values, math.exp(log_lo), 1.0))
    codes = np.rint((logs - log_lo) / step).astype(np.int64)
    return np.clip(codes, 0, n - 1)


def decode_block(codes: np.ndarray, bits: int, log_lo: float = GRID_LOG_LO) -> np.ndarray:
    """Grid values for the codes, renormalized to sum to one."""
    vals = np.exp(_grid(bits, log_lo)[np.asarray(codes, dtype=np.int64)])
    return vals / vals.sum()


def quantize(model: MixtureModel, aux: dict[int, float], bits: int) -> QuantizedModel:
    """Snap all free parameters to the log grid and renormalize per block."""
    codes: list[int] = []
    w = model.order + 2
    comps = []
    for comp in model.components:
        block = encode_block(np.array(comp.steps.probs), bits)
        codes.extend(int(c) for c in block)
        probs = decode_block(block, bits)
        comps.append(WalkComponent(comp.k, StepLaw(model.order, tuple(probs))))
    if len(model.components) >= 2:
        block = encode_block(np.array(model.weights), bits)
        codes.extend(int(c) for c in block)
        weights = tuple(decode_block(block, bits))
    else:
        weights = (1.0,)
    if len(aux) >= 2:
        lengths = sorted(aux)
        block = encode_block(np.array([aux[x] for x in lengths]), bits)
        codes.extend(int(c) for c in block)
        vals = decode_block(block, bits)
        q_aux = dict(zip(lengths, (float(v) for v in vals)))
    elif len(aux) == 1:
        q_aux = {next(iter(aux)): 1.0}
    else:
        q_aux = {}
    return QuantizedModel(
        structure=model.id,
        codes=tuple(codes),
        bits_per_param=bits,
        total_bits=bits * len(codes) + HEADER_BITS,
        model=MixtureModel(tuple(comps), weights),
        aux=q_aux,
    )


def augmented_distribution(
    qm_model: MixtureModel, aux: dict[int, float], lam: float, L: int
) -> dict[int, float]:
    """The augmented model over lengths: lam-scaled base plus aux remainder."""
    base = mixture_pmf(qm_model, max(L, qm_model.k_min)).as_dict()
    if not aux:
        return base
    out = {x: lam * q for x, q in base.items()}
    rest = 1.0 - lam
    for x, q in aux.items():
        out[x] = rest * q
    return out


def quantization_gkl(
    data: EmpiricalDistribution, qm: QuantizedModel, lam: float
) -> float:
    """Divergence of the data from the quantized augmented model."""
    dist = augmented_distribution(qm.model, qm.aux, lam, data.max_length)
    return gkl_parts(data.probs, dist, validate=False).total


def min_bits(
    data: EmpiricalDistribution,
    fitted: FitResult | MixtureModel,
    tol: Tolerance,
) -> QuantizedModel | None:
    """Smallest quantization keeping the model tolerable; None if 16 bits fail."""
    model = fitted.model if isinstance(fitted, FitResult) else fitted
    aug = augment(data, model)
    for bits in range(1, MAX_BITS + 1):
        qm = quantize(model, aug.aux, bits)
        if quantization_gkl(data, qm, aug.lam) <= tol.delta:
            return qm
    return None


def naive_bits(data: EmpiricalDistribution, tol: Tolerance) -> NaiveBits | None:
    """Bits for the nonparametric baseline: the quantized empirical law itself.

    The per-length probabilities are log-quantized and renormalized like
    model parameters, except the grid bottom extends to the smallest
    observed probability: empirical tails reach far below the model floor
    (a singleton length in n records has probability 1/n) and a grid that
    cannot contain them would misstate the baseline at every bit depth.
    The parameter count is the support size minus one; point-mass data
    needs no bits at all.
    """
    xs = sorted(data.probs)
    n_params = len(xs) - 1
    if n_params == 0:
        return NaiveBits(0, 0, 0)
    p = np.array([data.probs[x] for x in xs])
    log_lo = min(GRID_LOG_LO, float(np.log(p.min())))
    for bits in range(1, MAX_BITS + 1):
        q = decode_block(encode_block(p, bits, log_lo), bits, log_lo)
        dist = dict(zip(xs, (float(v) for v in q)))
        if gkl_parts(data.probs, dist, validate=False).total <= tol.delta:
            return NaiveBits(bits, bits * n_params, n_params)
    return None


@dataclass
class MdlEntry:
    model_id: str
    quantized: QuantizedModel | None

    @property
    def representable(self) -> bool:
        return self.quantized is not None


@dataclass
class MdlReport:
    tolerance: float
    entries: list[MdlEntry]
    winner_id: str | None
    naive: NaiveBits | None

    @property
    def winner(self) -> QuantizedModel | None:
        for e in self.entries:
            if e.model_id == self.winner_id:
                return e.quantized
        return None

    def to_tsv(self) -> str:
        header = "model_id\tmq\tnq\ttb\tpct_size"
        if self.winner_id is None or self.winner is None:
            return header + "\nnone\tnr\tnr\tnr\tnr\n"
        qm = self.winner
        nq = str(self.naive.bits_per_param) if self.naive else "nr"
        if self.naive and self.naive.total_bits > 0:
            pct = f"{100.0 * qm.total_bits / self.naive.total_bits:.2f}"
        else:
            pct = "nr"
        row = f"{self.winner_id}\t{qm.bits_per_param}\t{nq}\t{qm.total_bits}\t{pct}"
        return header + "\n" + row + "\n"


def mdl_compare(
    data: EmpiricalDistribution,
    fits: list[FitResult],
    tol: Tolerance,
) -> MdlReport:
    """Quantize every fitted model; fewest total bits among tolerable wins."""
    entries = [MdlEntry(f.model.id, min_bits(data, f, tol)) for f in fits]
    candidates = [e for e in entries if e.quantized is not None]
    winner = (
        min(candidates, key=lambda e: (e.quantized.total_bits, e.model_id)).model_id
        if candidates
        else None
    )
    return MdlReport(
        tolerance=tol.delta,
        entries=entries,
        winner_id=winner,
        naive=naive_bits(data, tol),
    )
