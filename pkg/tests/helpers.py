"""Shared test oracles: path enumeration and random model generation."""

from __future__ import annotations

import itertools
import math

import numpy as np

from walklen.walk import MixtureModel, ModelTemplate, StepLaw, WalkComponent


def enum_pmf_bruteforce(component: WalkComponent, i: int) -> float:
    """P(tau_k = i) by literal enumeration of every step sequence.

    Exponential in i; keep i small (<= 8 or so).
    """
    k = component.k
    steps = range(-1, component.steps.order + 1)
    probs = dict(zip(steps, component.steps.probs))
    total = 0.0
    for seq in itertools.product(steps, repeat=i):
        h = k
        ok = True
        for t, s in enumerate(seq, start=1):
            h += s
            if h == 0:
                ok = t == i
                break
            if h < 0:
                ok = False
                break
        else:
            ok = False
        if ok:
            p = 1.0
            for s in seq:
                p *= probs[s]
            total += p
    return total


def enum_pmf_paths(component: WalkComponent, i_max: int) -> np.ndarray:
    """P(tau_k = i) for i = 0..i_max by exhaustive path enumeration.

    Aggregates the paths by current height (dynamic programming over the
    lattice), which sums exactly the same products as the brute force but
    in polynomial time. Completely independent of the polynomial route.
    """
    k = component.k
    steps = list(range(-1, component.steps.order + 1))
    probs = list(component.steps.probs)
    out = np.zeros(i_max + 1)
    alive = {k: 1.0}
    for t in range(1, i_max + 1):
        nxt: dict[int, float] = {}
        for h, mass in alive.items():
            for s, p in zip(steps, probs):
                h2 = h + s
                contrib = mass * p
                if h2 == 0:
                    out[t] += contrib
                elif h2 > 0:
                    nxt[h2] = nxt.get(h2, 0.0) + contrib
        alive = nxt
    return out


def enum_mixture_pmf(model: MixtureModel, i_max: int) -> np.ndarray:
    acc = np.zeros(i_max + 1)
    for comp, alpha in zip(model.components, model.weights):
        acc += alpha * enum_pmf_paths(comp, i_max)
    return acc


def random_step_law(order: int, rng: np.random.Generator, floor: float = 0.01) -> StepLaw:
    """Interior step law with all probabilities at or above `floor`."""
    w = order + 2
    raw = rng.dirichlet(np.ones(w))
    probs = floor + (1 - w * floor) * raw
    probs = probs / probs.sum()
    return StepLaw(order, tuple(probs))


def random_component(rng: np.random.Generator, order: int | None = None,
                     k: int | None = None, floor: float = 0.01) -> WalkComponent:
    if order is None:
        order = int(rng.integers(1, 4))
    if k is None:
        k = int(rng.integers(1, 6))
    return WalkComponent(k, random_step_law(order, rng, floor=floor))


def random_model(rng: np.random.Generator, order: int | None = None,
                 ks: tuple[int, ...] | None = None, floor: float = 0.01) -> MixtureModel:
    if order is None:
        order = int(rng.integers(1, 4))
    if ks is None:
        size = int(rng.integers(1, 6))
        ks = tuple(sorted(rng.choice([1, 2, 3, 4, 5], size=size, replace=False)))
    comps = tuple(WalkComponent(k, random_step_law(order, rng, floor=floor)) for k in ks)
    if len(ks) == 1:
        weights: tuple[float, ...] = (1.0,)
    else:
        raw = rng.dirichlet(np.ones(len(ks)))
        raw = floor + (1 - len(ks) * floor) * raw
        raw = raw / raw.sum()
        weights = tuple(raw)
    return MixtureModel(comps, weights)


def fd_gradient(func, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (func(xp) - func(xm)) / (2 * h)
    return g


def true_validation_model() -> MixtureModel:
    """The single-component order-1 model used for synthetic validation."""
    return MixtureModel(
        (WalkComponent(3, StepLaw(1, (0.5, 0.25, 0.25))),), (1.0,)
    )


def reduced_pmf_fd(template: ModelTemplate, x: np.ndarray, L: int, h: float = 1e-6):
    """Finite-difference gradient of every pmf entry in reduced coordinates."""
    from walklen.walk import mixture_pmf

    base = mixture_pmf(template.model_from_params(x), L)
    n = base.probs.size
    G = np.zeros((x.size, n))
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        pp = mixture_pmf(template.model_from_params(xp), L).probs
        pm = mixture_pmf(template.model_from_params(xm), L).probs
        G[j] = (pp - pm) / (2 * h)
    return base, G
