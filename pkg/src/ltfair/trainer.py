"""Repeated risk minimization: resample the intervened distributions under the
current model, minimize the frozen objective, repeat until the parameters stop
moving."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .causal import S_MINUS, S_PLUS, DecisionModel, TimeLaggedScm, require_valid
from .datagen import PanelDataset
from .intervene import LONG_TERM, SHORT_TERM, InterventionSpec, rollout
from .io import dumps_line
from .objective import FrozenBatch, LossWeights, components, total_value_and_grad

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass
class InnerOptimizer:
    step: float = 1.0
    max_steps: int = 5000
    grad_tol: float = 1e-7
    armijo: float = 1e-4
    # stop once an accepted step is this small relative to ||theta|| (hinge kinks)
    x_tol: float = 1e-12


@dataclass
class RrmConfig:
    delta: float = 1e-4
    max_outer_iters: int = 50
    inner: InnerOptimizer = field(default_factory=InnerOptimizer)
    mc_samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.inner, dict):
            self.inner = InnerOptimizer(**self.inner)
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.max_outer_iters < 1 or self.mc_samples < 1 or self.inner.max_steps < 1:
            raise ValueError("iteration caps and sample counts must be at least 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class InnerResult:
    theta: np.ndarray
    value: float
    grad_norm: float
    steps: int
    converged: bool


def inner_minimize(batch: FrozenBatch | None, weights: LossWeights | None, theta_init,
                   opt: InnerOptimizer | None = None,
                   objective: Callable | None = None) -> InnerResult:
    """Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.

    ``objective`` maps ``theta -> (value, grad)`` and replaces the frozen-batch
    loss when given. Accepted steps never increase the objective by more than
    float resolution.
    """
    opt = opt or InnerOptimizer()
    if objective is None:
        objective = lambda th: total_value_and_grad(th, batch, weights)  # noqa: E731
    theta = np.array(theta_init, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DivergenceError("non-finite initial parameters")
    f, g = objective(theta)
    if not np.isfinite(f):
        raise DivergenceError("non-finite loss at the initial point")
    step = opt.step
    k = 0
    for k in range(opt.max_steps):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opt.grad_tol:
            return InnerResult(theta, f, gnorm, k, True)
        t = step
        while True:
            cand = theta - t * g
            fc, gc = objective(cand)
            if np.isfinite(fc) and fc <= f - opt.armijo * t * gnorm**2:
                break
            # decreases below float resolution of f are judged by the gradient norm
            if (np.isfinite(fc) and abs(fc - f) <= 8 * np.finfo(float).eps * max(1.0, abs(f))
                    and np.linalg.norm(gc) < gnorm):
                break
            t *= 0.5
            if t < 1e-16:
                # no descent possible along -g (e.g. sitting on a hinge kink)
                return InnerResult(theta, f, gnorm, k, False)
        if not np.isfinite(fc):
            raise DivergenceError("non-finite loss during inner minimization")
        s = cand - theta
        if np.linalg.norm(s) <= opt.x_tol * max(1.0, float(np.linalg.norm(theta))):
            gnorm_c = float(np.linalg.norm(gc))
            return InnerResult(cand, fc, gnorm_c, k + 1, gnorm_c <= opt.grad_tol)
        yv = gc - g
        sy = float(s @ yv)
        step = float(s @ s) / sy if sy > 0 else 2.0 * t
        theta, f, g = cand, fc, gc
    gnorm = float(np.linalg.norm(g))
    return InnerResult(theta, f, gnorm, k + 1, gnorm <= opt.grad_tol)


def utility_part(dataset: PanelDataset, horizon: int) -> dict:
    if dataset.l < horizon:
        raise ValueError(f"dataset has {dataset.l} steps, horizon needs {horizon}")
    return {"util_s": dataset.s, "util_x": dataset.x[:, :horizon], "util_y": dataset.y[:, :horizon]}


def observational_batch(dataset: PanelDataset, horizon: int) -> FrozenBatch:
    """Fairness sets taken straight from the data, with no intervention."""
    plus, minus = dataset.s == S_PLUS, dataset.s == S_MINUS
    x = dataset.x
    return FrozenBatch(
        **utility_part(dataset, horizon),
        longterm_plus=x[plus, horizon - 1],
        longterm_minus=x[minus, horizon - 1],
        shortterm_minus=[x[minus, t] for t in range(horizon)],
        shortterm_plus=[x[plus, t] for t in range(horizon)],
    )


def sample_batch(scm: TimeLaggedScm, dataset: PanelDataset, model: DecisionModel, n: int,
                 seed) -> FrozenBatch:
    """Intervened sample sets under ``model`` (the previous iterate).

    Each set has its own fixed substream of ``seed``, so repeated calls with
    different models reuse the same random numbers.
    """
    T = scm.horizon
    lt_plus = rollout(scm, InterventionSpec(LONG_TERM, S_PLUS, model, T), n, (seed, 0))[-1]
    lt_minus = rollout(scm, InterventionSpec(LONG_TERM, S_MINUS, model, T), n, (seed, 1))[-1]
    st_minus = rollout(scm, InterventionSpec(SHORT_TERM, S_MINUS, model, T), n, (seed, 2))
    st_plus = rollout(scm, InterventionSpec(SHORT_TERM, S_PLUS, model, T), n, (seed, 3))
    return FrozenBatch(**utility_part(dataset, T), longterm_plus=lt_plus, longterm_minus=lt_minus,
                       shortterm_minus=st_minus, shortterm_plus=st_plus)


def init_model(dataset: PanelDataset, weights: LossWeights, horizon: int | None = None,
               opt: InnerOptimizer | None = None) -> DecisionModel:
    """Minimize the full objective with fairness terms on observational data."""
    if dataset.n == 0:
        raise ValueError("empty dataset")
    horizon = dataset.l if horizon is None else horizon
    if np.unique(dataset.y[:, :horizon]).size < 2:
        log.warning("dataset has a single label class; the minimizer is driven by l2 only")
    batch = observational_batch(dataset, horizon)
    res = inner_minimize(batch, weights, np.zeros(dataset.feature_dim + 2), opt)
    return DecisionModel(res.theta)


@dataclass
class IterationRecord:
    iteration: int
    theta: list
    l_u: float
    l_l: float
    l_s: float
    total: float
    delta: float
    inner_steps: int
    grad_norm: float
    wall_time: float = 0.0

    def to_dict(self, timing: bool = False):
        d = asdict(self)
        if not timing:
            d.pop("wall_time")
        return d


@dataclass
class RrmTrace:
    records: list = field(default_factory=list)
    theta0: list | None = None
    converged: bool = False
    converged_at: int | None = None

    @property
    def deltas(self) -> np.ndarray:
        return np.array([r.delta for r in self.records])

    def to_jsonl(self, timing: bool = False) -> str:
        return "".join(dumps_line(r.to_dict(timing)) for r in self.records)


def rrm_fit(scm: TimeLaggedScm, dataset: PanelDataset, weights: LossWeights, cfg: RrmConfig,
            theta0: DecisionModel | None = None) -> tuple[DecisionModel, RrmTrace]:
    require_valid(scm)
    if dataset.feature_dim != scm.feature_dim:
        raise ValueError("dataset and SCM feature dimensions differ")
    model = theta0 if theta0 is not None else init_model(dataset, weights, scm.horizon, cfg.inner)
    trace = RrmTrace(theta0=model.weights.tolist())
    for i in range(1, cfg.max_outer_iters + 1):
        t0 = time.perf_counter()
        batch = sample_batch(scm, dataset, model, cfg.mc_samples, cfg.seed)
        try:
            res = inner_minimize(batch, weights, model.weights, cfg.inner)
        except DivergenceError as exc:
            exc.trace = trace
            raise
        if not np.all(np.isfinite(res.theta)):
            raise DivergenceError("inner optimizer produced non-finite parameters", trace)
        delta = float(np.linalg.norm(res.theta - model.weights))
        comp = components(res.theta, batch, weights)
        trace.records.append(IterationRecord(
            i, res.theta.tolist(), comp["l_u"], comp["l_l"], comp["l_s"], comp["total"], delta,
            res.steps, res.grad_norm, time.perf_counter() - t0))
        log.debug("rrm iteration %d: delta=%.3e total=%.6f", i, delta, comp["total"])
        model = DecisionModel(res.theta)
        if delta < cfg.delta:
            trace.converged = True
            trace.converged_at = i
            break
    return model, trace
