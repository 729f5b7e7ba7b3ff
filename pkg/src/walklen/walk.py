"""Return-time distributions of valency random walks and their mixtures.

A walk starts at height k (the total valency) and moves by one step per
word: down one with probability p[-1], flat with p[0], or up by s with
p[s], s up to the order r. The modeled sentence length is the first time
the walk hits 0. Writing F(u) = p[-1] + p[0]*u + ... + p[r]*u^(r+1), the
probability of returning at time i is

    P(tau_k = i) = (k / i) * [u^(i-k)] F(u)^i

which we evaluate by iterated truncated polynomial multiplication. The
same pass yields the analytic derivative with respect to each step
probability,

    d P(tau_k = i) / d p_s = k * [u^(i-k-s-1)] F(u)^(i-1),

so gradients cost the same as the distribution itself. An independent
route to the distribution, used for cross-checking, computes the series
fixed point f = x * F(f) and reads the coefficients of f^k.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .histogram import LengthHistogram

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but keep a fallback
    _HAVE_NUMBA = False

# Interior floor for step probabilities and mixture weights during fitting:
# keeps log-derivatives and curvature finite at the simplex boundary.
EPS_FLOOR = 1e-6

# Walks that fail to return within this many steps are rejected and re-drawn.
SAMPLE_STEP_CAP = 10_000_000

MAX_ORDER = 3
K_POOL = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class StepLaw:
    """Distribution of one word's effect on the open-valency count.

    probs = (p[-1], p[0], ..., p[order]); entries nonnegative, summing to 1.
    """

    order: int
    probs: tuple[float, ...]

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.probs) != self.order + 2:
            raise ValueError(
                f"order {self.order} needs {self.order + 2} step probabilities, "
                f"got {len(self.probs)}"
            )
        if any(p < 0 for p in self.probs):
            raise ValueError("step probabilities must be nonnegative")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"step probabilities sum to {total}, not 1")

    def coeffs(self) -> np.ndarray:
        """Coefficients of F(u), ascending degree."""
        return np.array(self.probs, dtype=np.float64)

    def drift(self) -> float:
        """Expected step; negative drift guarantees return."""
        return float(sum(s * p for s, p in zip(range(-1, self.order + 1), self.probs)))


@dataclass(frozen=True)
class WalkComponent:
    """One walk: total valency k plus its step law. tau_k >= k always."""

    k: int
    steps: StepLaw

    def __post_init__(self):
        if not (1 <= self.k <= max(K_POOL)):
            raise ValueError(f"total valency must be in 1..{max(K_POOL)}, got {self.k}")


@dataclass(frozen=True)
class MixtureModel:
    """Convex combination of walk components with distinct total valencies.

    All components share one order; component k values are strictly
    increasing so the structural id is canonical.
    """

    components: tuple[WalkComponent, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.components:
            raise ValueError("mixture needs at least one component")
        if len(self.weights) != len(self.components):
            raise ValueError("one weight per component required")
        if any(w <= 0 for w in self.weights):
            raise ValueError("mixture weights must be positive")
        total = math.fsum(self.weights)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total}, not 1")
        ks = [c.k for c in self.components]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError(f"component valencies must be strictly increasing, got {ks}")
        orders = {c.steps.order for c in self.components}
        if len(orders) > 1:
            raise ValueError(f"all components must share one order, got {sorted(orders)}")

    @property
    def order(self) -> int:
        return self.components[0].steps.order

    @property
    def ks(self) -> tuple[int, ...]:
        return tuple(c.k for c in self.components)

    @property
    def k_min(self) -> int:
        return self.components[0].k

    @property
    def id(self) -> str:
        return model_id(self.order, self.ks)

    @property
    def template(self) -> "ModelTemplate":
        return ModelTemplate(self.order, self.ks)


@dataclass
class Pmf:
    """Return-time probabilities P(tau = i) for i = support_min .. L.

    The mass beyond L (and, for nonnegative drift, the never-returning
    mass) is left as a residual, never renormalized away.
    """

    support_min: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.support_min < 1:
            raise ValueError("support must start at 1 or above")
        if self.probs.ndim != 1 or self.probs.size == 0:
            raise ValueError("probs must be a nonempty vector")
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if self.probs.sum() > 1 + 1e-12:
            raise ValueError("probabilities exceed 1")

    @property
    def length_cap(self) -> int:
        return self.support_min + self.probs.size - 1

    def prob_at(self, i: int) -> float:
        if self.support_min <= i <= self.length_cap:
            return float(self.probs[i - self.support_min])
        return 0.0

    def total_mass(self) -> float:
        return float(self.probs.sum())

    def residual_mass(self) -> float:
        return 1.0 - self.total_mass()

    def as_dict(self) -> dict[int, float]:
        """Support defined by strict positivity."""
        return {
            i: float(p)
            for i, p in zip(range(self.support_min, self.length_cap + 1), self.probs)
            if p > 0
        }


# ---------------------------------------------------------------------------
# model ids


def format_k_set(ks: Sequence[int]) -> str:
    """Canonical text for a valency set: runs of 3+ contract to "a-b"."""
    ks = sorted(ks)
    parts: list[str] = []
    i = 0
    while i < len(ks):
        j = i
        while j + 1 < len(ks) and ks[j + 1] == ks[j] + 1:
            j += 1
        if j - i >= 2:
            parts.append(f"{ks[i]}-{ks[j]}")
        else:
            parts.extend(str(k) for k in ks[i : j + 1])
        i = j + 1
    return ".".join(parts)


def parse_k_set(text: str) -> tuple[int, ...]:
    ks: list[int] = []
    for tok in text.split("."):
        if "-" in tok:
            a, b = tok.split("-")
            ks.extend(range(int(a), int(b) + 1))
        else:
            ks.append(int(tok))
    out = tuple(sorted(set(ks)))
    if len(out) != len(ks):
        raise ValueError(f"duplicate valencies in {text!r}")
    return out


def model_id(order: int, ks: Sequence[int]) -> str:
    return f"{order}.k{format_k_set(ks)}"


def parse_model_id(text: str) -> "ModelTemplate":
    head, sep, tail = text.partition(".k")
    if not sep or not tail:
        raise ValueError(f"malformed model id {text!r}")
    return ModelTemplate(int(head), parse_k_set(tail))


@dataclass(frozen=True)
class ModelTemplate:
    """Model structure: the order and the set of component valencies.

    Continuous parameters live in reduced simplex coordinates: each step
    law drops its last probability and the weight block drops its last
    weight, so a template with m components has m*(order+1) + (m-1) free
    coordinates.
    """

    order: int
    ks: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")
        if not self.ks:
            raise ValueError("need at least one component valency")
        if any(b <= a for a, b in zip(self.ks, self.ks[1:])):
            raise ValueError(f"valencies must be strictly increasing, got {self.ks}")
        if any(k not in K_POOL for k in self.ks):
            raise ValueError(f"valencies must be within {K_POOL}, got {self.ks}")

    @property
    def id(self) -> str:
        return model_id(self.order, self.ks)

    @property
    def m(self) -> int:
        return len(self.ks)

    @property
    def k_min(self) -> int:
        return self.ks[0]

    @property
    def n_params(self) -> int:
        """Free continuous dimensions in reduced coordinates."""
        return self.m * (self.order + 1) + (self.m - 1)

    def param_names(self) -> list[str]:
        names = []
        for k in self.ks:
            names.extend(f"k{k}.p[{s}]" for s in range(-1, self.order))
        names.extend(f"alpha[{k}]" for k in self.ks[:-1])
        return names

    def param_blocks(self) -> list[slice]:
        """Slices of the reduced vector, one per simplex block."""
        w = self.order + 2
        blocks = []
        pos = 0
        for _ in self.ks:
            blocks.append(slice(pos, pos + w - 1))
            pos += w - 1
        if self.m > 1:
            blocks.append(slice(pos, pos + self.m - 1))
        return blocks

    def uniform_params(self) -> np.ndarray:
        """Uniform step laws and uniform weights, in reduced coordinates."""
        w = self.order + 2
        x = []
        for _ in self.ks:
            x.extend([1.0 / w] * (w - 1))
        x.extend([1.0 / self.m] * (self.m - 1))
        return np.array(x, dtype=np.float64)

    def model_from_params(self, x: np.ndarray) -> MixtureModel:
        """Materialize a model from a reduced parameter vector."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {x.shape}")
        w = self.order + 2
        comps = []
        pos = 0
        for k in self.ks:
            head = x[pos : pos + w - 1]
            probs = tuple(head) + (1.0 - float(head.sum()),)
            comps.append(WalkComponent(k, StepLaw(self.order, probs)))
            pos += w - 1
        if self.m == 1:
            weights: tuple[float, ...] = (1.0,)
        else:
            head = x[pos:]
            weights = tuple(head) + (1.0 - float(head.sum()),)
        return MixtureModel(tuple(comps), weights)

    def params_from_model(self, model: MixtureModel) -> np.ndarray:
        if model.order != self.order or model.ks != self.ks:
            raise ValueError(f"model {model.id} does not match template {self.id}")
        x: list[float] = []
        for comp in model.components:
            x.extend(comp.steps.probs[:-1])
        x.extend(model.weights[:-1])
        return np.array(x, dtype=np.float64)


def all_templates(
    orders: Iterable[int] = (1, 2, 3), k_pool: Iterable[int] = K_POOL
) -> list[ModelTemplate]:
    """Every (order, nonempty valency subset) combination, canonically ordered."""
    pool = tuple(sorted(k_pool))
    out = []
    for order in sorted(orders):
        for size in range(1, len(pool) + 1):
            for ks in itertools.combinations(pool, size):
                out.append(ModelTemplate(order, ks))
    return sorted(out, key=lambda t: (t.order, t.ks))


# ---------------------------------------------------------------------------
# coefficient engine


def _tables_numpy(F: np.ndarray, k: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    w = F.size
    M = L - k + 1
    pmf = np.zeros(L + 1)
    grad = np.zeros((w, L + 1))
    prev = np.zeros(M)
    prev[0] = 1.0
    cur = np.zeros(M)
    head = min(w, M)
    cur[:head] = F[:head]
    for i in range(1, L + 1):
        if i >= k:
            jj = i - k
            pmf[i] = k * cur[jj] / i
            for sidx in range(w):
                j2 = jj - sidx
                if 0 <= j2 < M:
                    grad[sidx, i] = k * prev[j2]
        if i < L:
            nxt = F[0] * cur
            for sidx in range(1, w):
                if sidx < M:
                    nxt[sidx:] += F[sidx] * cur[: M - sidx]
            prev = cur
            cur = nxt
    return pmf, grad


if _HAVE_NUMBA:

    @njit(cache=True)
    def _tables_numba(F, k, L):  # pragma: no cover - exercised via dispatch
        w = F.size
        M = L - k + 1
        pmf = np.zeros(L + 1)
        grad = np.zeros((w, L + 1))
        prev = np.zeros(M)
        cur = np.zeros(M)
        nxt = np.zeros(M)
        prev[0] = 1.0
        head = w if w < M else M
        for j in range(head):
            cur[j] = F[j]
        cur_len = head
        for i in range(1, L + 1):
            if i >= k:
                jj = i - k
                pmf[i] = k * cur[jj] / i
                for sidx in range(w):
                    j2 = jj - sidx
                    if 0 <= j2 < M:
                        grad[sidx, i] = k * prev[j2]
            if i < L:
                new_len = cur_len + w - 1
                if new_len > M:
                    new_len = M
                for j in range(new_len):
                    lo = j - w + 1
                    if lo < 0:
                        lo = 0
                    hi = j
                    if hi > cur_len - 1:
                        hi = cur_len - 1
                    acc = 0.0
                    for t in range(lo, hi + 1):
                        acc += cur[t] * F[j - t]
                    nxt[j] = acc
                tmp = prev
                prev = cur
                cur = nxt
                nxt = tmp
                cur_len = new_len
        return pmf, grad


def _pmf_grad_tables(F: np.ndarray, k: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    """P(tau_k = i) for i = 0..L plus full-coordinate step derivatives.

    Returns (pmf, grad) with pmf[i] = P(tau_k = i) and
    grad[s + 1, i] = d pmf[i] / d p_s. Entries below i = k are zero.
    """
    F = np.ascontiguousarray(F, dtype=np.float64)
    if L < k:
        raise ValueError(f"truncation L={L} below minimal return time k={k}")
    if _HAVE_NUMBA:
        return _tables_numba(F, k, L)
    return _tables_numpy(F, k, L)


# ---------------------------------------------------------------------------
# public operations


def step_poly(steps: StepLaw) -> np.ndarray:
    """Coefficients of F(u), the step polynomial; [u^(s+1)] F = p_s."""
    return steps.coeffs()


def return_time_pmf(component: WalkComponent, L: int) -> Pmf:
    """Exact distribution of the first hit of 0, truncated at L."""
    pmf, _ = _pmf_grad_tables(component.steps.coeffs(), component.k, L)
    return Pmf(component.k, pmf[component.k :])


def mixture_pmf(model: MixtureModel, L: int) -> Pmf:
    """Pointwise weighted sum of component return-time distributions.

    Components whose valency exceeds L contribute nothing below the
    truncation; only the smallest valency must fit under L.
    """
    k_min = model.k_min
    if L < k_min:
        raise ValueError(f"truncation L={L} below minimal valency {k_min}")
    acc = np.zeros(L + 1)
    for comp, alpha in zip(model.components, model.weights):
        if comp.k > L:
            continue
        pmf, _ = _pmf_grad_tables(comp.steps.coeffs(), comp.k, L)
        acc += alpha * pmf
    return Pmf(k_min, acc[k_min:])


def mixture_pmf_and_gradient(model: MixtureModel, L: int) -> tuple[Pmf, np.ndarray]:
    """Mixture distribution plus its gradient in reduced coordinates.

    Gradient rows follow the template parameter layout: for each component
    its step coordinates p[-1] .. p[order-1] (the last step probability is
    eliminated), then the first m-1 mixture weights (the last weight is
    eliminated). Columns align with the returned Pmf.
    """
    k_min = model.k_min
    if L < k_min:
        raise ValueError(f"truncation L={L} below minimal valency {k_min}")
    w = model.order + 2
    m = len(model.components)
    d = m * (w - 1) + (m - 1)
    pmfs = []
    grads = []
    for comp in model.components:
        if comp.k > L:
            pmfs.append(np.zeros(L + 1))
            grads.append(np.zeros((w, L + 1)))
            continue
        pmf, grad = _pmf_grad_tables(comp.steps.coeffs(), comp.k, L)
        pmfs.append(pmf)
        grads.append(grad)
    mix = np.zeros(L + 1)
    for alpha, pmf in zip(model.weights, pmfs):
        mix += alpha * pmf
    G = np.zeros((d, L + 1))
    row = 0
    for j, alpha in enumerate(model.weights):
        for sidx in range(w - 1):
            G[row] = alpha * (grads[j][sidx] - grads[j][w - 1])
            row += 1
    for j in range(m - 1):
        G[row] = pmfs[j] - pmfs[m - 1]
        row += 1
    return Pmf(k_min, mix[k_min:]), G[:, k_min:]


def pmf_gradient(model: MixtureModel, L: int) -> np.ndarray:
    """Reduced-coordinate gradient of every mixture pmf entry."""
    _, G = mixture_pmf_and_gradient(model, L)
    return G


def series_inversion_pmf(component: WalkComponent, L: int) -> Pmf:
    """Return-time distribution via the generating-function fixed point.

    Iterates the truncated power series f <- x * F(f) until stable (degree
    n is exact after n rounds) and reads off the coefficients of f^k. An
    independent route to the same numbers as return_time_pmf, kept for
    cross-checking the coefficient engine.
    """
    k = component.k
    if L < k:
        raise ValueError(f"truncation L={L} below minimal return time k={k}")
    F = component.steps.coeffs()
    n = L + 1
    f = np.zeros(n)
    for _ in range(L):
        acc = np.zeros(n)
        acc[0] = F[0]
        power = None
        for sidx in range(1, F.size):
            power = f if sidx == 1 else np.convolve(power, f)[:n]
            acc += F[sidx] * power
        f_new = np.zeros(n)
        f_new[1:] = acc[: n - 1]
        if np.array_equal(f_new, f):
            break
        f = f_new
    fk = f
    for _ in range(k - 1):
        fk = np.convolve(fk, f)[:n]
    return Pmf(k, fk[k:])


# ---------------------------------------------------------------------------
# sampling


def seed_stream(root: int, stream: int) -> np.random.SeedSequence:
    """Independent child seed for one named random stream.

    All randomness of a run flows from one root seed through fixed stream
    ids, so adding parallelism never changes what any consumer draws.
    """
    return np.random.SeedSequence(root, spawn_key=(stream,))


class SampleResult(NamedTuple):
    histogram: LengthHistogram
    rejected: int


def _simulate_component(
    component: WalkComponent, count: int, rng: np.random.Generator, max_steps: int
) -> np.ndarray:
    """Return times for `count` walks; -1 marks walks that hit the step cap."""
    steps = np.arange(-1, component.steps.order + 1, dtype=np.int64)
    probs = np.array(component.steps.probs)
    tau = np.full(count, -1, dtype=np.int64)
    slots = np.arange(count)
    pos = np.full(count, component.k, dtype=np.int64)
    t = 0
    while slots.size and t < max_steps:
        t += 1
        pos = pos + rng.choice(steps, size=slots.size, p=probs)
        done = pos == 0
        if done.any():
            tau[slots[done]] = t
            keep = ~done
            slots = slots[keep]
            pos = pos[keep]
    return tau


def sample_lengths(
    model: MixtureModel,
    count: int,
    seed: int | np.random.SeedSequence,
    max_steps: int = SAMPLE_STEP_CAP,
) -> tuple[np.ndarray, int]:
    """Simulate `count` sentence lengths, in i.i.d. stream order.

    Each draw picks a component by weight, then walks until the first hit
    of 0. Walks exceeding max_steps are rejected, tallied, and re-drawn so
    the output always holds `count` finite lengths.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    m = len(model.components)
    if m == 1:
        comp_idx = np.zeros(count, dtype=np.int64)
    else:
        comp_idx = rng.choice(m, size=count, p=np.array(model.weights))
    out = np.zeros(count, dtype=np.int64)
    rejected = 0
    for j, comp in enumerate(model.components):
        need = np.flatnonzero(comp_idx == j)
        while need.size:
            tau = _simulate_component(comp, need.size, rng, max_steps)
            ok = tau > 0
            out[need[ok]] = tau[ok]
            rejected += int((~ok).sum())
            need = need[~ok]
    return out, rejected


def sample(
    model: MixtureModel,
    count: int,
    seed: int | np.random.SeedSequence,
    max_steps: int = SAMPLE_STEP_CAP,
) -> SampleResult:
    """Sampled length histogram plus the tally of capped-and-redrawn walks."""
    lengths, rejected = sample_lengths(model, count, seed, max_steps=max_steps)
    counts: dict[int, int] = {}
    vals, cnts = np.unique(lengths, return_counts=True)
    for v, c in zip(vals, cnts):
        counts[int(v)] = int(c)
    hist = LengthHistogram(counts, cutoff=int(vals[-1]))
    return SampleResult(hist, rejected)


# ---------------------------------------------------------------------------
# serialization


def model_to_text(model: MixtureModel) -> str:
    """Key-value text form; floats carry 17 significant digits so the
    round-trip is bit-exact."""
    lines = [f"order {model.order}"]
    for comp, alpha in zip(model.components, model.weights):
        lines.append(f"k {comp.k}")
        lines.append(f"alpha {alpha:.17g}")
        for s, p in zip(range(-1, model.order + 1), comp.steps.probs):
            lines.append(f"p[{s}] {p:.17g}")
    return "\n".join(lines) + "\n"


def model_from_text(text: str) -> MixtureModel:
    order: int | None = None
    comps: list[WalkComponent] = []
    weights: list[float] = []
    cur_k: int | None = None
    cur_alpha: float | None = None
    cur_probs: dict[int, float] = {}

    def flush():
        nonlocal cur_k, cur_alpha, cur_probs
        if cur_k is None:
            return
        if order is None:
            raise ValueError("component precedes the order line")
        if cur_alpha is None:
            raise ValueError(f"component k={cur_k} is missing its alpha")
        expected = list(range(-1, order + 1))
        if sorted(cur_probs) != expected:
            raise ValueError(
                f"component k={cur_k} needs p[{expected[0]}]..p[{expected[-1]}]"
            )
        probs = tuple(cur_probs[s] for s in expected)
        comps.append(WalkComponent(cur_k, StepLaw(order, probs)))
        weights.append(cur_alpha)
        cur_k, cur_alpha, cur_probs = None, None, {}

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        if not value:
            raise ValueError(f"malformed line {line!r}")
        if key == "order":
            order = int(value)
        elif key == "k":
            flush()
            cur_k = int(value)
        elif key == "alpha":
            cur_alpha = float(value)
        elif key.startswith("p[") and key.endswith("]"):
            cur_probs[int(key[2:-1])] = float(value)
        else:
            raise ValueError(f"unknown key {key!r}")
    flush()
    if order is None or not comps:
        raise ValueError("model text needs an order line and at least one component")
    return MixtureModel(tuple(comps), tuple(weights))


def save_model(model: MixtureModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_text(model))


def load_model(path) -> MixtureModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_text(fh.read())
