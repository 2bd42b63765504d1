"""Static baselines trained on the pooled panel: plain ridge-logistic regression
(LR) and penalized variants targeting demographic parity (FMDP) and equal
opportunity (FMEO)."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .causal import S_MINUS, S_PLUS, DecisionModel
from .datagen import PanelDataset
from .objective import surrogate, surrogate_grad

KINDS = ("LR", "FMDP", "FMEO")
PENALTY_LADDER = (0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0)


class BaselineError(ValueError):
    pass


@dataclass
class BaselineSpec:
    kind: str = "LR"
    fairness_budget: float = 0.0
    # None runs the penalty ladder until the budget is met
    penalty_weight: float | None = 10.0
    l2_reg: float = 1e-3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.fairness_budget < 0 or (self.penalty_weight is not None and self.penalty_weight < 0):
            raise ValueError("budget and penalty must be nonnegative")

    def to_dict(self):
        return asdict(self)


def _design(x, s):
    return np.column_stack([x, s.astype(float), np.ones(len(s))])


def _gap_rows(kind, s, y):
    """Boolean row masks of the two groups the fairness gap compares."""
    if kind == "FMEO":
        return (s == S_PLUS) & (y == 1), (s == S_MINUS) & (y == 1)
    return s == S_PLUS, s == S_MINUS


def surrogate_gap(theta, z_mat, plus, minus):
    """``mean_{s+} phi(-h) + mean_{s-} phi(h) - 1`` and its gradient."""
    h = z_mat @ theta
    hp, hm = h[plus], h[minus]
    val = surrogate(-hp).mean() + surrogate(hm).mean() - 1.0
    grad = (-surrogate_grad(-hp)) @ z_mat[plus] / plus.sum() + surrogate_grad(hm) @ z_mat[minus] / minus.sum()
    return val, grad


def _fit(z_mat, y, l2_reg, gap=None, budget=0.0, rho=0.0):
    def fun(theta):
        m = y * (z_mat @ theta)
        val = surrogate(m).mean() + l2_reg * theta @ theta
        grad = (surrogate_grad(m) * y) @ z_mat / len(y) + 2 * l2_reg * theta
        if gap is not None and rho > 0:
            g, gg = gap(theta)
            excess = abs(g) - budget
            if excess > 0:
                val += rho * excess**2
                grad = grad + 2 * rho * excess * np.sign(g) * gg
        return val, grad

    res = minimize(fun, np.zeros(z_mat.shape[1]), jac=True, method="L-BFGS-B",
                   options={"maxiter": 10_000, "gtol": 1e-12, "ftol": 1e-15})
    return res.x


def fit_baseline(dataset: PanelDataset, spec: BaselineSpec, seed: int = 0) -> DecisionModel:
    """Fit on every ``(s, x^t, y^t)`` row with equal weight.

    The fit is deterministic (zero start, quasi-Newton), so ``seed`` only
    tags the result.
    """
    if dataset.n == 0:
        raise BaselineError("empty dataset")
    s, x, y = dataset.pooled()
    z_mat = _design(x, s)
    if spec.kind == "LR":
        return DecisionModel(_fit(z_mat, y, spec.l2_reg))
    plus, minus = _gap_rows(spec.kind, s, y)
    for name, mask in (("S=1", plus), ("S=0", minus)):
        if not mask.any():
            raise BaselineError(f"{spec.kind}: group {name} has no rows with a positive label"
                                if spec.kind == "FMEO" else f"{spec.kind}: group {name} is empty")

    def gap(theta):
        return surrogate_gap(theta, z_mat, plus, minus)

    if spec.penalty_weight is not None:
        return DecisionModel(_fit(z_mat, y, spec.l2_reg, gap, spec.fairness_budget,
                                  spec.penalty_weight))
    theta = None
    for rho in PENALTY_LADDER:
        theta = _fit(z_mat, y, spec.l2_reg, gap, spec.fairness_budget, rho)
        if abs(gap(theta)[0]) <= spec.fairness_budget + 1e-6:
            break
    return DecisionModel(theta)


def training_gap(dataset: PanelDataset, model: DecisionModel, kind: str = "FMDP") -> float:
    """Absolute surrogate fairness gap of ``model`` on the pooled training rows."""
    s, x, y = dataset.pooled()
    plus, minus = _gap_rows(kind, s, y)
    return abs(surrogate_gap(model.weights, _design(x, s), plus, minus)[0])
