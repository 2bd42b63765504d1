"""Surrogate-relaxed utility, long-term and short-term fairness losses.

Parameters are the flat weight vector of a :class:`~ltfair.causal.DecisionModel`
(``[w_x, w_s, b]``). Every expectation is a plain sample mean over a
:class:`FrozenBatch`, i.e. the distributions are held fixed while the
parameters move.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .causal import S_MINUS, S_PLUS


def surrogate(z):
    """Logistic surrogate ``log(1 + exp(-z))``, overflow-safe."""
    return np.logaddexp(0.0, -np.asarray(z, dtype=float))


def surrogate_grad(z):
    return -expit(-np.asarray(z, dtype=float))


@dataclass
class LossWeights:
    lambda_u: float = 0.6
    lambda_l: float = 0.2
    lambda_s: float = 0.2
    tau_l: float = 0.0
    tau_t: float = 0.0
    l2_reg: float = 1e-3
    # which intervened distribution feeds the s+ term of the short-term loss
    shortterm_plus_source: str = "minus"

    def __post_init__(self):
        lam = (self.lambda_u, self.lambda_l, self.lambda_s)
        if min(lam) < 0:
            raise ValueError("loss weights must be nonnegative")
        if abs(sum(lam) - 1.0) > 1e-9:
            raise ValueError(f"loss weights must sum to 1, got {sum(lam)!r}")
        if min(self.tau_l, self.tau_t, self.l2_reg) < 0:
            raise ValueError("thresholds and l2_reg must be nonnegative")
        if self.shortterm_plus_source not in ("minus", "plus"):
            raise ValueError("shortterm_plus_source is 'minus' or 'plus'")

    def to_dict(self):
        return asdict(self)


@dataclass
class FrozenBatch:
    """Samples the inner problem is solved on.

    ``util_x`` has shape ``(n, T, d)``; the fairness sets are ``(m, d)`` arrays,
    one per time step for the short-term lists.
    """

    util_s: np.ndarray
    util_x: np.ndarray
    util_y: np.ndarray
    longterm_plus: np.ndarray | None = None
    longterm_minus: np.ndarray | None = None
    shortterm_minus: list = field(default_factory=list)
    shortterm_plus: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.util_x.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.util_x.shape[2]


def _design(x, s):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    return np.column_stack([x, np.broadcast_to(np.asarray(s, dtype=float), (n,)), np.ones(n)])


def _mean_phi(theta, x, s, sign):
    """Mean of ``phi(sign * h(x, s))`` and its gradient."""
    z_mat = _design(x, s)
    z = sign * (z_mat @ theta)
    val = surrogate(z).mean()
    grad = (surrogate_grad(z) * sign) @ z_mat / len(z)
    return val, grad


def utility_terms(theta, batch: FrozenBatch, l2_reg: float):
    theta = np.asarray(theta, dtype=float)
    if batch.util_x.size == 0:
        raise ValueError("empty utility batch")
    n, T, _ = batch.util_x.shape
    val = 0.0
    grad = np.zeros_like(theta)
    for t in range(T):
        z_mat = _design(batch.util_x[:, t], batch.util_s)
        y = batch.util_y[:, t]
        z = y * (z_mat @ theta)
        val += surrogate(z).mean()
        grad += (surrogate_grad(z) * y) @ z_mat / n
    val += l2_reg * theta @ theta
    grad += 2.0 * l2_reg * theta
    return val, grad


def longterm_raw(theta, batch: FrozenBatch, tau_l: float):
    if batch.longterm_plus is None or batch.longterm_minus is None or \
            len(batch.longterm_plus) == 0 or len(batch.longterm_minus) == 0:
        raise ValueError("long-term loss needs both intervened sample sets")
    theta = np.asarray(theta, dtype=float)
    a, ga = _mean_phi(theta, batch.longterm_plus, S_MINUS, -1.0)
    b, gb = _mean_phi(theta, batch.longterm_minus, S_MINUS, 1.0)
    return 0.5 * (a + b - 1.0 - tau_l), 0.5 * (ga + gb)


def longterm_terms(theta, batch, tau_l):
    raw, g = longterm_raw(theta, batch, tau_l)
    if raw > 0:
        return raw, g
    return 0.0, np.zeros_like(g)


def shortterm_raw(theta, batch: FrozenBatch, tau_t: float, plus_source: str = "minus"):
    """Per-time-step raw terms and gradients, shape ``(T,)`` and ``(T, p)``."""
    T = batch.horizon
    if len(batch.shortterm_minus) < T or any(len(x) == 0 for x in batch.shortterm_minus[:T]):
        raise ValueError(f"short-term loss needs a nonempty sample set for each of {T} steps")
    if plus_source == "plus" and len(batch.shortterm_plus) < T:
        raise ValueError("short-term s+ samples requested but not present")
    theta = np.asarray(theta, dtype=float)
    raws, grads = [], []
    for t in range(T):
        x_plus = batch.shortterm_plus[t] if plus_source == "plus" else batch.shortterm_minus[t]
        a, ga = _mean_phi(theta, x_plus, S_PLUS, -1.0)
        b, gb = _mean_phi(theta, batch.shortterm_minus[t], S_MINUS, 1.0)
        raws.append(a + b - 1.0 - tau_t)
        grads.append(ga + gb)
    return np.array(raws), np.array(grads)


def shortterm_terms(theta, batch, tau_t, plus_source="minus"):
    raws, grads = shortterm_raw(theta, batch, tau_t, plus_source)
    active = raws > 0
    val = np.where(active, raws, 0.0).mean()
    grad = (grads * active[:, None]).sum(axis=0) / len(raws)
    return val, grad


def loss_utility(theta, batch, l2_reg=0.0) -> float:
    return float(utility_terms(theta, batch, l2_reg)[0])


def loss_longterm(theta, batch, tau_l=0.0) -> float:
    return float(longterm_terms(theta, batch, tau_l)[0])


def loss_shortterm(theta, batch, tau_t=0.0, plus_source="minus") -> float:
    return float(shortterm_terms(theta, batch, tau_t, plus_source)[0])


def components(theta, batch: FrozenBatch, weights: LossWeights) -> dict:
    """Loss components, skipping fairness terms whose weight is zero."""
    out = {"l_u": float(utility_terms(theta, batch, weights.l2_reg)[0]), "l_l": 0.0, "l_s": 0.0}
    if weights.lambda_l > 0:
        out["l_l"] = float(longterm_terms(theta, batch, weights.tau_l)[0])
    if weights.lambda_s > 0:
        out["l_s"] = float(shortterm_terms(theta, batch, weights.tau_t,
                                           weights.shortterm_plus_source)[0])
    out["total"] = (weights.lambda_u * out["l_u"] + weights.lambda_l * out["l_l"]
                    + weights.lambda_s * out["l_s"])
    return out


def total_value_and_grad(theta, batch: FrozenBatch, weights: LossWeights):
    theta = np.asarray(theta, dtype=float)
    val, grad = utility_terms(theta, batch, weights.l2_reg)
    val, grad = weights.lambda_u * val, weights.lambda_u * grad
    if weights.lambda_l > 0:
        v, g = longterm_terms(theta, batch, weights.tau_l)
        val += weights.lambda_l * v
        grad = grad + weights.lambda_l * g
    if weights.lambda_s > 0:
        v, g = shortterm_terms(theta, batch, weights.tau_t, weights.shortterm_plus_source)
        val += weights.lambda_s * v
        grad = grad + weights.lambda_s * g
    return float(val), grad


def total_loss(theta, batch, weights) -> float:
    return total_value_and_grad(theta, batch, weights)[0]


def total_grad(theta, batch, weights) -> np.ndarray:
    return total_value_and_grad(theta, batch, weights)[1]


def hinge_signs(theta, batch: FrozenBatch, weights: LossWeights) -> tuple:
    """Which hinge terms are active at ``theta``; used to detect kinks."""
    signs = []
    if weights.lambda_l > 0:
        signs.append(bool(longterm_raw(theta, batch, weights.tau_l)[0] > 0))
    if weights.lambda_s > 0:
        raws, _ = shortterm_raw(theta, batch, weights.tau_t, weights.shortterm_plus_source)
        signs.extend(bool(r > 0) for r in raws)
    return tuple(signs)
