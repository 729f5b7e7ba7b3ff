"""Simplex-constrained Adagrad fitting of walk mixtures to length data.

The objective is the generalized KL divergence from the empirical
distribution to the model distribution, minimized over reduced simplex
coordinates (each probability block drops its last coordinate). The
overlap-mass term is constant within a template because the model support
is fixed by the valency set, so the optimization effectively minimizes the
cross entropy over the covered lengths.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .histogram import EmpiricalDistribution
from .walk import (
    EPS_FLOOR,
    K_POOL,
    MixtureModel,
    ModelTemplate,
    _pmf_grad_tables,
    all_templates,
)


class UnfittableTemplateError(ValueError):
    """Template support lies entirely above the data's maximum length."""


class FitDivergedError(RuntimeError):
    """Objective became non-finite even after the fallback restart."""


# consecutive objective increases that trigger the single fallback restart
OSCILLATION_WINDOW = 50


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.9
    fallback_rate: float = 0.1
    grad_tol: float = 1e-3
    max_iters: int = 10000
    fallback_iters: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.fallback_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1 or self.fallback_iters < 1:
            raise ValueError("iteration budgets must be >= 1")


@dataclass
class FitResult:
    model: MixtureModel
    objective: float  # gkl of the data from the fitted model, in nats
    iters: int
    converged: bool
    used_fallback: bool
    seconds: float = 0.0  # wall time of this fit, trace metadata

    @property
    def id(self) -> str:
        return self.model.id


@dataclass
class FitFailure:
    template_id: str
    error: str


class FitObjective:
    """gkl(data, model) and its gradient as a function of reduced coordinates.

    Precomputes the covered support (data lengths the template can reach),
    its overlap mass, and the data-entropy constant. The truncation length
    is the data maximum; coefficients below it are exact regardless of the
    truncation, so the objective matches any longer rendering of the model.
    """

    def __init__(self, template: ModelTemplate, data: EmpiricalDistribution):
        xs = data.support()
        ps = data.prob_array()
        L = int(xs[-1])
        if template.k_min > L:
            raise UnfittableTemplateError(
                f"template {template.id} starts at {template.k_min}, "
                f"beyond the data maximum {L}"
            )
        covered = xs >= template.k_min
        self.template = template
        self.L = L
        self.xs = xs[covered].astype(np.int64)
        self.ps = ps[covered]
        self.lam = float(self.ps.sum())
        ln_p = np.log(self.ps)
        self.const = float(np.dot(self.ps, ln_p)) - (
            self.lam * math.log(self.lam) if self.lam < 1.0 else 0.0
        )
        self.d = template.n_params
        self._w = template.order + 2

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        t = self.template
        w = self._w
        m = t.m
        pmf_rows = []
        grad_rows = []
        pos = 0
        n_pts = self.xs.size
        for k in t.ks:
            if k > self.L:
                # component support lies beyond the data; contributes nothing
                pmf_rows.append(np.zeros(n_pts))
                grad_rows.append(np.zeros((w, n_pts)))
                pos += w - 1
                continue
            head = x[pos : pos + w - 1]
            F = np.empty(w)
            F[: w - 1] = head
            F[w - 1] = 1.0 - head.sum()
            pmf, grad = _pmf_grad_tables(F, k, self.L)
            pmf_rows.append(pmf[self.xs])
            grad_rows.append(grad[:, self.xs])
            pos += w - 1
        alphas = np.empty(m)
        if m == 1:
            alphas[0] = 1.0
        else:
            head = x[pos:]
            alphas[: m - 1] = head
            alphas[m - 1] = 1.0 - head.sum()
        q = np.zeros_like(self.ps)
        for a, pr in zip(alphas, pmf_rows):
            q += a * pr
        if not np.all(q > 0):
            return math.inf, np.full(self.d, np.nan)
        with np.errstate(over="ignore"):
            obj = self.const - float(np.dot(self.ps, np.log(q)))
        ratio = self.ps / q
        g = np.empty(self.d)
        row = 0
        for j in range(m):
            gj = grad_rows[j]
            last = gj[w - 1]
            for sidx in range(w - 1):
                g[row] = -alphas[j] * float(np.dot(ratio, gj[sidx] - last))
                row += 1
        for j in range(m - 1):
            g[row] = -float(np.dot(ratio, pmf_rows[j] - pmf_rows[m - 1]))
            row += 1
        return obj, g

    def value(self, x: np.ndarray) -> float:
        return self.value_and_grad(x)[0]


def project_block_interior(v: np.ndarray, floor: float = EPS_FLOOR) -> np.ndarray:
    """Euclidean projection onto the simplex with every coordinate >= floor."""
    D = v.size
    slack = 1.0 - D * floor
    if slack <= 0:
        raise ValueError(f"floor {floor} infeasible for a {D}-point simplex")
    shifted = v - floor
    u = np.sort(shifted)[::-1]
    css = np.cumsum(u) - slack
    idx = np.arange(1, D + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(shifted - theta, 0.0) + floor


def _project_params(template: ModelTemplate, x: np.ndarray) -> np.ndarray:
    out = x.copy()
    for block in template.param_blocks():
        head = out[block]
        full = np.empty(head.size + 1)
        full[:-1] = head
        full[-1] = 1.0 - head.sum()
        out[block] = project_block_interior(full)[:-1]
    return out


@dataclass
class _Descent:
    x: np.ndarray
    objective: float
    grad: np.ndarray
    iters: int
    converged: bool
    trigger: str | None  # None, "oscillation" or "nonfinite"


def _descend(
    objective: FitObjective,
    x0: np.ndarray,
    rate: float,
    max_iters: int,
    grad_tol: float,
    abort_on_trigger: bool,
) -> _Descent:
    template = objective.template
    x = _project_params(template, x0.copy())
    accum = np.zeros_like(x)
    prev_obj = math.inf
    streak = 0
    obj, g = objective.value_and_grad(x)
    iters = 0
    for t in range(1, max_iters + 1):
        iters = t
        if not (math.isfinite(obj) and np.all(np.isfinite(g))):
            return _Descent(x, obj, g, iters, False, "nonfinite")
        if float(np.abs(g).max()) <= grad_tol:
            return _Descent(x, obj, g, iters, True, None)
        if obj > prev_obj:
            streak += 1
            if streak >= OSCILLATION_WINDOW and abort_on_trigger:
                return _Descent(x, obj, g, iters, False, "oscillation")
        else:
            streak = 0
        prev_obj = obj
        accum += g * g
        x = x - rate * g / np.sqrt(accum + 1e-12)
        x = _project_params(template, x)
        obj, g = objective.value_and_grad(x)
    if not (math.isfinite(obj) and np.all(np.isfinite(g))):
        return _Descent(x, obj, g, iters, False, "nonfinite")
    converged = float(np.abs(g).max()) <= grad_tol
    return _Descent(x, obj, g, iters, converged, None)


def fit(
    data: EmpiricalDistribution,
    template: ModelTemplate,
    cfg: FitConfig = FitConfig(),
) -> FitResult:
    """Adagrad descent from the uniform start, with one fallback restart.

    Stops when every reduced-coordinate gradient entry is within the
    tolerance, or the iteration budget runs out. A first pass that fails,
    whether by divergence (non-finite objective), fifty consecutive
    objective increases, or exhausting its budget short of the gradient
    criterion, is restarted once from uniform with the smaller fallback
    rate and at least 10k iterations; a second divergence aborts.
    """
    started = time.monotonic()
    objective = FitObjective(template, data)
    x0 = template.uniform_params()
    first = _descend(
        objective, x0, cfg.learning_rate, cfg.max_iters, cfg.grad_tol,
        abort_on_trigger=True,
    )
    used_fallback = False
    run = first
    if first.trigger is not None or not first.converged:
        used_fallback = True
        run = _descend(
            objective, x0, cfg.fallback_rate,
            max(cfg.max_iters, cfg.fallback_iters),
            cfg.grad_tol, abort_on_trigger=False,
        )
        if run.trigger == "nonfinite":
            raise FitDivergedError(
                f"objective non-finite for {template.id} even at the fallback "
                f"rate {cfg.fallback_rate}: objective={run.objective!r}"
            )
        run = _Descent(
            run.x, run.objective, run.grad, first.iters + run.iters,
            run.converged, run.trigger,
        )
    model = template.model_from_params(run.x)
    return FitResult(
        model=model,
        objective=run.objective,
        iters=run.iters,
        converged=run.converged,
        used_fallback=used_fallback,
        seconds=time.monotonic() - started,
    )


def result_from_model(data: EmpiricalDistribution, model: MixtureModel) -> FitResult:
    """Wrap a stored model as a result, recomputing its objective.

    Used when comparing models loaded from disk; the optimizer trace
    fields are placeholders.
    """
    try:
        objective = FitObjective(model.template, data)
        value = objective.value(model.template.params_from_model(model))
    except UnfittableTemplateError:
        value = 0.0  # no overlap: zero by the gkl convention, flagged downstream
    return FitResult(
        model=model, objective=value, iters=0, converged=True,
        used_fallback=False, seconds=0.0,
    )


def _fit_one(args) -> FitResult | FitFailure:
    data, template, cfg = args
    try:
        return fit(data, template, cfg)
    except (UnfittableTemplateError, FitDivergedError) as exc:
        return FitFailure(template.id, str(exc))


@dataclass
class FitAllResult:
    results: list[FitResult]
    failures: list[FitFailure]


def fit_all(
    data: EmpiricalDistribution,
    cfg: FitConfig = FitConfig(),
    orders: Iterable[int] = (1, 2, 3),
    k_pool: Iterable[int] = K_POOL,
    jobs: int = 1,
) -> FitAllResult:
    """Fit every (order, valency subset) template, 93 in the default family.

    Templates are independent, so they may run in parallel; the result list
    is ordered by model id either way. A template that cannot be fitted is
    recorded as a failure, not raised.
    """
    templates = all_templates(orders, k_pool)
    tasks = [(data, t, cfg) for t in templates]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_fit_one, tasks, chunksize=1))
    else:
        outcomes = [_fit_one(t) for t in tasks]
    results = [o for o in outcomes if isinstance(o, FitResult)]
    failures = [o for o in outcomes if isinstance(o, FitFailure)]
    results.sort(key=lambda r: (r.model.order, r.model.ks))
    failures.sort(key=lambda f: f.template_id)
    return FitAllResult(results, failures)
