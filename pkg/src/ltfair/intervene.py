"""Post-intervention distributions under a path-specific hard intervention on S
combined with a soft intervention (model deployment) on every decision.

Two routes are provided: :func:`sample_post_intervention` (ancestral Monte Carlo,
any SCM) and :func:`exact_post_intervention` (table fold, finite-state SCMs
only). The second is the reference the first is tested against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .causal import (S_MINUS, S_PLUS, DecisionModel, TimeLaggedScm, mix_channels,
                     require_valid)

LONG_TERM = "long_term"
SHORT_TERM = "short_term"

DEFAULT_MC_SAMPLES = 10_000
DEFAULT_ENUMERATION_CAP = 10**7


class EnumerationCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class InterventionSpec:
    mode: str
    hard_value: int
    soft_model: DecisionModel
    target_time: int
    reference_value: int = S_MINUS

    def check(self, scm: TimeLaggedScm) -> None:
        if self.mode not in (LONG_TERM, SHORT_TERM):
            raise ValueError(f"unknown intervention mode {self.mode!r}")
        if not 1 <= self.target_time <= scm.horizon:
            raise ValueError(
                f"target_time {self.target_time} outside [1, {scm.horizon}] (horizon overflow)")
        if self.mode == LONG_TERM and self.target_time != scm.horizon:
            raise ValueError("long-term interventions target the horizon")
        if self.hard_value not in (0, 1) or self.reference_value not in (0, 1):
            raise ValueError("protected attribute values are 0 or 1")

    def on_path(self, scm: TimeLaggedScm) -> np.ndarray:
        """Feature columns whose mechanisms receive the hard value."""
        if self.mode == LONG_TERM:
            return scm.mask("relevant")
        return scm.mask("redlining")


@dataclass(frozen=True)
class WeightedSamples:
    x: np.ndarray
    weights: np.ndarray

    @classmethod
    def uniform(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, np.full(len(x), 1.0 / len(x)))


@dataclass(frozen=True)
class ExactDistribution:
    states: np.ndarray
    probs: np.ndarray

    def expect(self, f_values) -> float:
        return float(np.dot(self.probs, f_values))


def _coupled(f, hard, ref, mask, seed):
    """Evaluate ``f(s, rng)`` with the hard value on masked columns and the
    reference elsewhere, using identical random draws for both."""
    if hard == ref or not mask.any():
        return f(ref, np.random.default_rng(seed))
    if mask.all():
        return f(hard, np.random.default_rng(seed))
    return mix_channels(f(hard, np.random.default_rng(seed)),
                        f(ref, np.random.default_rng(seed)), mask)


def rollout(scm: TimeLaggedScm, spec: InterventionSpec, n: int, seed) -> list[np.ndarray]:
    """Ancestral sampling of ``X^1 .. X^{target_time}`` under ``spec``.

    The random draws consumed do not depend on the soft model, so calls with
    the same seed and different models share common random numbers.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    hard, ref = spec.hard_value, spec.reference_value
    mask = spec.on_path(scm)
    s_outcome = hard if spec.mode == LONG_TERM else ref
    model = spec.soft_model
    init_seed, step_seed = np.random.SeedSequence(_entropy(seed)).spawn(2)

    x = _coupled(lambda s, r: scm.init_sampler.sample(np.full(n, s), r), hard, ref, mask, init_seed)
    xs = [x]
    rng = np.random.default_rng(step_seed)
    for _ in range(1, spec.target_time):
        u_dec = rng.random(n)
        u_out = rng.random(n)
        t_seed = int(rng.integers(2**63))
        yhat = np.where(u_dec < model.prob(x, ref), 1, -1)
        y = np.where(u_out < scm.truth_model.prob(x, s_outcome), 1, -1)
        x_prev = x
        x = _coupled(lambda s, r: scm.transition.apply(x_prev, yhat, y, np.full(n, s), model.w_x, r),
                     hard, ref, mask, t_seed)
        xs.append(x)
    return xs


def _entropy(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy
    if isinstance(seed, (tuple, list)):
        return [int(v) for v in seed]
    return int(seed)


def sample_post_intervention(scm: TimeLaggedScm, spec: InterventionSpec, n: int,
                             seed) -> WeightedSamples:
    require_valid(scm)
    spec.check(scm)
    return WeightedSamples.uniform(rollout(scm, spec, n, seed)[-1])


def exact_post_intervention(scm: TimeLaggedScm, spec: InterventionSpec,
                            cap: int = DEFAULT_ENUMERATION_CAP) -> ExactDistribution:
    """Exact distribution of ``X^{target_time}`` summed over every trajectory."""
    require_valid(scm)
    spec.check(scm)
    if not scm.is_discrete:
        raise TypeError("exact enumeration needs tabular init and transition")
    init, trans = scm.init_sampler, scm.transition
    if not np.array_equal(init.states, trans.states):
        raise ValueError("init and transition must share the state list")
    mask = spec.on_path(scm)
    if mask.any() and not mask.all() and spec.hard_value != spec.reference_value:
        raise NotImplementedError("mixed-role partitions need a factorized init table")
    k = init.states.shape[0]
    t = spec.target_time
    n_traj = k**t * 2 ** (t - 1)
    if n_traj > cap:
        raise EnumerationCapExceeded(
            f"{n_traj} trajectories exceed the enumeration cap of {cap}")

    s_init = spec.hard_value if mask.all() else spec.reference_value
    p = init.probs[s_init].copy()
    p_yes = spec.soft_model.prob(init.states, spec.reference_value)
    step = (1.0 - p_yes)[:, None] * trans.table[0] + p_yes[:, None] * trans.table[1]
    for _ in range(1, t):
        p = p @ step
    return ExactDistribution(init.states, p)


def _check_mode(mode):
    if mode not in (LONG_TERM, SHORT_TERM):
        raise ValueError(f"unknown mode {mode!r}")


def effect_terms(scm: TimeLaggedScm, model: DecisionModel, mode: str, n: int, seed,
                 t: int | None = None, plus: int = S_PLUS, minus: int = S_MINUS,
                 reference: int = S_MINUS) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw terms whose mean difference is the effect.

    Long-term draws are paired: draw ``i`` under ``plus`` and under ``minus``
    share all random numbers.
    """
    _check_mode(mode)
    require_valid(scm)
    if mode == LONG_TERM:
        sub = scm if t is None else scm.with_horizon(t)
        target = sub.horizon
        x_plus = sample_post_intervention(
            sub, InterventionSpec(LONG_TERM, plus, model, target, reference), n, seed).x
        x_minus = sample_post_intervention(
            sub, InterventionSpec(LONG_TERM, minus, model, target, reference), n, seed).x
        return model.prob(x_plus, reference), model.prob(x_minus, reference)
    target = scm.horizon if t is None else t
    x = sample_post_intervention(
        scm, InterventionSpec(SHORT_TERM, minus, model, target, reference), n, seed).x
    return model.prob(x, plus), model.prob(x, minus)


def effect(scm: TimeLaggedScm, model: DecisionModel, mode: str, n: int = DEFAULT_MC_SAMPLES,
           seed=0, t: int | None = None, plus: int = S_PLUS, minus: int = S_MINUS,
           reference: int = S_MINUS) -> float:
    """Difference of positive-decision rates transmitted along the selected paths.

    ``mode='long_term'`` contrasts the chain started under ``plus`` with the one
    started under ``minus`` (decisions always scored at ``reference``), at the
    horizon or at ``t`` when given. ``mode='short_term'`` toggles the scorer's
    protected input at time ``t`` on the chain rolled out under ``minus``.
    """
    a, b = effect_terms(scm, model, mode, n, seed, t, plus, minus, reference)
    return float(a.mean() - b.mean())


def exact_effect(scm: TimeLaggedScm, model: DecisionModel, mode: str, t: int | None = None,
                 plus: int = S_PLUS, minus: int = S_MINUS, reference: int = S_MINUS,
                 cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    _check_mode(mode)
    if mode == LONG_TERM:
        sub = scm if t is None else scm.with_horizon(t)
        dp = exact_post_intervention(sub, InterventionSpec(LONG_TERM, plus, model, sub.horizon,
                                                           reference), cap)
        dm = exact_post_intervention(sub, InterventionSpec(LONG_TERM, minus, model, sub.horizon,
                                                           reference), cap)
        return dp.expect(model.prob(dp.states, reference)) - dm.expect(
            model.prob(dm.states, reference))
    target = scm.horizon if t is None else t
    d = exact_post_intervention(scm, InterventionSpec(SHORT_TERM, minus, model, target, reference),
                                cap)
    return d.expect(model.prob(d.states, plus) - model.prob(d.states, minus))
