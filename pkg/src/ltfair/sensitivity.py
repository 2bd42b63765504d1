"""Empirical constants behind the RRM convergence condition.

* ``gamma_hat`` / ``beta_hat``: strong convexity and smoothness of the frozen loss
* ``c_hat``: how strongly the decision gradient reshapes the next-step features
* ``eps_hat``: Wasserstein-1 movement of an intervened distribution per unit
  parameter change
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .causal import LendingTransition, TabularTransition, TimeLaggedScm, sigmoid
from .intervene import InterventionSpec, exact_post_intervention, rollout
from .objective import FrozenBatch, LossWeights, hinge_signs, total_value_and_grad


class SensitivityError(ValueError):
    pass


# --------------------------------------------------------------------------
# Wasserstein-1


def w1_1d(a, b, wa=None, wb=None) -> float:
    """Exact W1 between two weighted 1-D point sets (integral of |CDF_a - CDF_b|)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    wa = np.full(a.size, 1.0 / a.size) if wa is None else np.asarray(wa, dtype=float) / np.sum(wa)
    wb = np.full(b.size, 1.0 / b.size) if wb is None else np.asarray(wb, dtype=float) / np.sum(wb)
    if a.size == b.size and np.allclose(wa, wa[0]) and np.allclose(wb, wb[0]):
        return float(np.abs(np.sort(a) - np.sort(b)).mean())
    pts = np.concatenate([a, b])
    order = np.argsort(pts, kind="mergesort")
    pts = pts[order]
    mass = np.concatenate([wa, -wb])[order]
    cdf_diff = np.cumsum(mass)[:-1]
    return float(np.sum(np.abs(cdf_diff) * np.diff(pts)))


def w1_samples(a, b, max_support: int = 500, seed: int = 0) -> float:
    """W1 between equal-weight sample sets; multi-D via an exact assignment on
    (at most ``max_support``) subsampled points. Equal-size sets are subsampled
    at the same row indices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1 or a.shape[1] == 1:
        return w1_1d(a.ravel(), b.ravel())
    k = min(len(a), len(b), max_support)
    rng = np.random.default_rng(seed)
    ia = rng.choice(len(a), k, replace=False) if k < len(a) else np.arange(k)
    if len(a) == len(b):
        # row-aligned (draw-coupled) sets keep their pairing
        ib = ia
    else:
        ib = rng.choice(len(b), k, replace=False) if k < len(b) else np.arange(k)
    cost = np.linalg.norm(a[ia][:, None, :] - b[ib][None, :, :], axis=2)
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean())


def w1_tables(states, p, q) -> float:
    """Exact W1 between two distributions on the same finite state list."""
    states = np.asarray(states, dtype=float)
    if states.ndim == 1 or states.shape[1] == 1:
        return w1_1d(states.ravel(), states.ravel(), np.asarray(p) + 0.0, np.asarray(q) + 0.0) \
            if np.sum(p) > 0 else 0.0
    k = len(states)
    cost = np.linalg.norm(states[:, None, :] - states[None, :, :], axis=2).ravel()
    a_eq = np.zeros((2 * k, k * k))
    for i in range(k):
        a_eq[i, i * k:(i + 1) * k] = 1.0
        a_eq[k + i, i::k] = 1.0
    res = linprog(cost, A_eq=a_eq, b_eq=np.concatenate([p, q]), bounds=(0, None), method="highs")
    return float(res.fun)


# --------------------------------------------------------------------------
# distribution sensitivity


def _bounded(scm: TimeLaggedScm, clip):
    if scm.is_discrete:
        return
    if clip is None:
        raise SensitivityError("continuous features need a clipping box for a finite diameter")


def _pairs(theta_pairs):
    for th, th2 in theta_pairs:
        th, th2 = np.asarray(th, dtype=float), np.asarray(th2, dtype=float)
        dist = float(np.linalg.norm(th - th2))
        if dist > 0:
            yield th, th2, dist


def _spec(template: InterventionSpec, theta):
    from .causal import DecisionModel
    return InterventionSpec(template.mode, template.hard_value, DecisionModel(theta),
                            template.target_time, template.reference_value)


def estimate_eps_sensitivity(scm: TimeLaggedScm, theta_pairs, spec: InterventionSpec, n: int,
                             seed=0, clip=None, max_support: int = 500) -> float:
    """Largest sampled ``W1(P_theta, P_theta') / ||theta - theta'||`` over pairs.

    Both distributions of a pair are sampled with the same random numbers.
    Identical parameters are skipped.
    """
    _bounded(scm, clip)
    best = 0.0
    for th, th2, dist in _pairs(theta_pairs):
        xa = rollout(scm, _spec(spec, th), n, seed)[-1]
        xb = rollout(scm, _spec(spec, th2), n, seed)[-1]
        if clip is not None:
            xa = np.clip(xa, clip[0], clip[1])
            xb = np.clip(xb, clip[0], clip[1])
        best = max(best, w1_samples(xa, xb, max_support) / dist)
    return best


def exact_eps_sensitivity(scm: TimeLaggedScm, theta_pairs, spec: InterventionSpec) -> float:
    best = 0.0
    for th, th2, dist in _pairs(theta_pairs):
        da = exact_post_intervention(scm, _spec(spec, th))
        db = exact_post_intervention(scm, _spec(spec, th2))
        best = max(best, w1_tables(da.states, da.probs, db.probs) / dist)
    return best


def diameter(scm: TimeLaggedScm, clip=None) -> float:
    """Maximum ground distance ``m`` between two feature values."""
    if clip is not None:
        lo = np.broadcast_to(np.asarray(clip[0], dtype=float), (scm.feature_dim,))
        hi = np.broadcast_to(np.asarray(clip[1], dtype=float), (scm.feature_dim,))
        return float(np.linalg.norm(hi - lo))
    if scm.is_discrete:
        st = scm.transition.states
        return float(np.linalg.norm(st[:, None, :] - st[None, :, :], axis=2).max())
    raise SensitivityError("unbounded feature domain; configure a clipping box")


# --------------------------------------------------------------------------
# attribute sensitivity


@dataclass
class CEstimate:
    c_hat: float
    n_probes: int
    skipped: int


def _gauss_kernel(u, bandwidth):
    d = u.shape[-1]
    return np.exp(-0.5 * np.sum(u**2, axis=-1) / bandwidth**2) / (
        (2 * np.pi) ** (d / 2) * bandwidth**d)


def estimate_c(scm: TimeLaggedScm, theta_grid, probe_states=None, bandwidth: float = 0.5,
               s_values=(0, 1)) -> CEstimate:
    """``max ||sum_y grad P_theta(y|x,s) P(x'|x,y)|| / sum_y P(x'|x,y)`` over probes.

    The decision gradient is analytic: ``grad P_theta(+1|x,s) = sigma'(h) (x, s, 1)``
    and the ``y = -1`` term is its negative, so the numerator reduces to
    ``sigma'(h) ||(x, s, 1)|| |P(x'|x,+1) - P(x'|x,-1)|``. Tabular transitions are
    evaluated exactly; the lending rule through a Gaussian kernel of width
    ``bandwidth`` centred on its successor points, probed at those points.
    """
    theta_grid = [np.asarray(t, dtype=float) for t in theta_grid]
    trans = scm.transition
    best, count, skipped = 0.0, 0, 0
    for theta in theta_grid:
        w_x, w_s, b = theta[:-2], theta[-2], theta[-1]
        for s in s_values:
            if isinstance(trans, TabularTransition):
                xs = trans.states if probe_states is None else np.atleast_2d(probe_states)
                idx = trans.index_of(xs)
                p_pos = trans.table[1][idx]  # (probes, next states)
                p_neg = trans.table[0][idx]
            elif isinstance(trans, LendingTransition):
                if probe_states is None:
                    raise SensitivityError("continuous transitions need probe states")
                xs = np.atleast_2d(np.asarray(probe_states, dtype=float))
                repay = scm.truth_model.prob(xs, s)
                up, down, stay = trans.outcomes(xs, np.full(len(xs), s), w_x)
                nexts = np.stack([up, down, stay], axis=1)  # (probes, 3, d)
                k_up = _gauss_kernel(nexts - up[:, None, :], bandwidth)
                k_down = _gauss_kernel(nexts - down[:, None, :], bandwidth)
                p_pos = repay[:, None] * k_up + (1 - repay)[:, None] * k_down
                p_neg = _gauss_kernel(nexts - stay[:, None, :], bandwidth)
            else:
                raise SensitivityError(f"cannot evaluate transition {type(trans).__name__}")
            h = xs @ w_x + w_s * s + b
            sig = sigmoid(h)
            gnorm = sig * (1 - sig) * np.sqrt(np.sum(xs**2, axis=1) + s**2 + 1.0)
            num = gnorm[:, None] * np.abs(p_pos - p_neg)
            den = p_pos + p_neg
            ok = den > 0
            skipped += int((~ok).sum())
            count += int(ok.sum())
            if ok.any():
                best = max(best, float((num[ok] / den[ok]).max()))
    return CEstimate(best, count, skipped)


# --------------------------------------------------------------------------
# curvature


def estimate_curvature(batch: FrozenBatch | None, weights: LossWeights | None, theta_samples,
                       objective=None) -> tuple[float, float]:
    """``(gamma_hat, beta_hat)`` from Bregman ratios and gradient-difference ratios
    over all ordered pairs of ``theta_samples``.

    With the frozen loss, pairs whose hinge activity differs straddle a kink and
    are skipped. ``objective`` (``theta -> (value, grad)``) swaps the loss out.
    """
    thetas = [np.asarray(t, dtype=float) for t in theta_samples]
    if len(thetas) < 2:
        raise SensitivityError("need at least two parameter samples")
    if objective is None:
        objective = lambda th: total_value_and_grad(th, batch, weights)  # noqa: E731
        signs = [hinge_signs(t, batch, weights) for t in thetas]
    else:
        signs = [()] * len(thetas)
    evals = [objective(t) for t in thetas]
    gammas, betas = [], []
    for i, j in itertools.permutations(range(len(thetas)), 2):
        if signs[i] != signs[j]:
            continue
        d = thetas[j] - thetas[i]
        dd = float(d @ d)
        if dd == 0:
            continue
        (fi, gi), (fj, gj) = evals[i], evals[j]
        gammas.append(2.0 * (fj - fi - gi @ d) / dd)
        betas.append(float(np.linalg.norm(gj - gi)) / np.sqrt(dd))
    if not gammas:
        raise SensitivityError("every parameter pair straddles a hinge kink")
    return max(0.0, float(min(gammas))), float(max(betas))


# --------------------------------------------------------------------------


@dataclass
class SensitivityReport:
    gamma_hat: float
    beta_hat: float
    c_hat: float
    eps_hat: float
    m: float
    horizon: int

    @property
    def bound_2mct(self) -> float:
        return 2.0 * self.m * self.c_hat * (self.horizon - 1)

    def to_dict(self):
        d = asdict(self)
        d["bound_2mct"] = self.bound_2mct
        d.update(convergence_predicate(self).to_dict())
        return d


@dataclass
class PredicateResult:
    holds: bool
    margin: float
    # conventional stability condition eps < gamma / beta, reported alongside
    reciprocal_holds: bool
    reciprocal_margin: float

    def to_dict(self):
        return {"predicate": self.holds, "margin": self.margin,
                "reciprocal_predicate": self.reciprocal_holds,
                "reciprocal_margin": self.reciprocal_margin}


def convergence_predicate(report: SensitivityReport) -> PredicateResult:
    """``2 m c (T-1) < beta/gamma`` as stated, plus the ``< gamma/beta`` form."""
    lhs = report.bound_2mct
    ratio = np.inf if report.gamma_hat == 0 else report.beta_hat / report.gamma_hat
    inv = np.inf if report.beta_hat == 0 else report.gamma_hat / report.beta_hat
    return PredicateResult(bool(lhs < ratio), float(ratio - lhs), bool(lhs < inv), float(inv - lhs))
