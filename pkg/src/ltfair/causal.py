"""Time-lagged structural causal model of a sequential decision process.

The graph is the one used throughout the package::

    S -> X^1 -> X^2 -> ... -> X^T
    S -> Y^t,  X^t -> Y^t,  (X^t, Y^t) -> X^{t+1}

Decisions ``Y^t`` are produced by a linear :class:`DecisionModel`. Feature
evolution is a registered transition object, never learned from data.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.special import expit

S_PLUS = 1
S_MINUS = 0

ROLES = ("relevant", "irrelevant", "redlining")


class DimensionError(ValueError):
    """Raised when an input does not match the model's feature dimension."""


def sigmoid(z):
    return expit(z)


@dataclass(frozen=True, eq=False)
class DecisionModel:
    """Affine scorer ``h(x, s) = w_x . x + w_s * s + b``.

    ``weights`` is laid out as ``[w_x (d entries), w_s, b]``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size < 3:
            raise DimensionError("weights need at least one feature, s and bias")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __eq__(self, other):
        return isinstance(other, DecisionModel) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    @classmethod
    def zeros(cls, feature_dim: int) -> "DecisionModel":
        return cls(np.zeros(feature_dim + 2))

    @property
    def feature_dim(self) -> int:
        return self.weights.size - 2

    @property
    def w_x(self) -> np.ndarray:
        return self.weights[:-2]

    @property
    def w_s(self) -> float:
        return float(self.weights[-2])

    @property
    def bias(self) -> float:
        return float(self.weights[-1])

    def score(self, x, s):
        """Score one feature vector or a batch of shape ``(n, d)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.feature_dim:
            raise DimensionError(
                f"expected {self.feature_dim} features, got {x.shape[-1]}")
        return x @ self.w_x + np.asarray(s, dtype=float) * self.w_s + self.bias

    def prob(self, x, s):
        return sigmoid(self.score(x, s))

    def decide(self, x, s):
        """Hard decision: +1 where the score is nonnegative, else -1."""
        return np.where(self.score(x, s) >= 0, 1, -1)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionModel":
        return cls(np.asarray(d["weights"], dtype=float))


def score(model: DecisionModel, x, s):
    return model.score(x, s)


def decision_prob(model: DecisionModel, x, s):
    return model.prob(x, s)


# --------------------------------------------------------------------------
# initial-state samplers P(X^1 | S)


class InitSampler(Protocol):
    feature_dim: int

    def sample(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ...


@dataclass(frozen=True)
class GaussianInit:
    """Group-conditional Gaussian for ``X^1``; row ``k`` of ``means`` is group ``S=k``."""

    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        d = means.shape[1]
        if covs.ndim == 2:
            covs = np.stack([covs, covs])
        if means.shape != (2, d) or covs.shape != (2, d, d):
            raise DimensionError("need two group means of length d and two d x d covariances")
        for k in range(2):
            c = covs[k]
            if not np.allclose(c, c.T):
                raise ValueError(f"covariance for group {k} is not symmetric")
            if np.linalg.eigvalsh(c).min() < -1e-10:
                raise ValueError(f"covariance for group {k} is not positive semidefinite")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        # PSD square roots, valid for singular covariances too
        roots = []
        for c in covs:
            vals, vecs = np.linalg.eigh(c)
            roots.append(vecs * np.sqrt(np.clip(vals, 0.0, None)))
        object.__setattr__(self, "_roots", np.stack(roots))

    @classmethod
    def default(cls, feature_dim: int) -> "GaussianInit":
        means = np.stack([-np.ones(feature_dim), np.ones(feature_dim)])
        return cls(means, np.eye(feature_dim))

    @property
    def feature_dim(self) -> int:
        return self.means.shape[1]

    def sample(self, s, rng):
        s = np.asarray(s, dtype=int)
        z = rng.standard_normal((s.size, self.feature_dim))
        return self.transform(z, s)

    def transform(self, z, s):
        """Map standard-normal draws ``z`` to ``X^1`` for groups ``s``."""
        s = np.asarray(s, dtype=int)
        return self.means[s] + np.einsum("nij,nj->ni", self._roots[s], z)


@dataclass(frozen=True)
class EmpiricalInit:
    """Resamples ``X^1`` rows of a seed population with matching ``S``."""

    s: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=int).reshape(-1)
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if s.size != x.shape[0]:
            raise DimensionError("seed population s and x lengths differ")
        for g in (0, 1):
            if not np.any(s == g):
                raise ValueError(f"seed population has no rows with S={g}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "x", x)

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    def sample(self, s, rng):
        s = np.asarray(s, dtype=int)
        u = rng.random(s.size)
        return self.transform(u, s)

    def transform(self, u, s):
        out = np.empty((s.size, self.feature_dim))
        for g in (0, 1):
            rows = self.x[self.s == g]
            mask = s == g
            idx = np.minimum((u[mask] * len(rows)).astype(int), len(rows) - 1)
            out[mask] = rows[idx]
        return out


@dataclass(frozen=True)
class TabularInit:
    """Finite-state ``P(X^1 | S)``: ``probs[s, k]`` is the mass of ``states[k]``."""

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (2, states.shape[0]):
            raise DimensionError("probs must have shape (2, n_states)")
        if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0):
            raise ValueError("each init row must be a probability vector")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)

    @property
    def feature_dim(self) -> int:
        return self.states.shape[1]

    def sample(self, s, rng):
        return self.states[self.sample_index(s, rng.random(np.size(s)))]

    def sample_index(self, s, u):
        cdf = np.cumsum(self.probs, axis=1)
        cdf[:, -1] = 1.0
        s = np.asarray(s, dtype=int)
        return np.array([np.searchsorted(cdf[g], ui, side="right") for g, ui in zip(s, u)],
                        dtype=int).clip(0, self.states.shape[0] - 1)


# --------------------------------------------------------------------------
# transitions P(X^{t+1} | X^t, Y^t)


class Transition(Protocol):
    def apply(self, x, yhat, y, s, w_x, rng) -> np.ndarray:
        ...


@dataclass(frozen=True)
class LendingTransition:
    """Credit-style feedback rule.

    A granted loan that is repaid moves the applicant along the deployed
    model's feature weights by ``eps``; a default moves them back by the same
    amount; a rejection leaves only the group base increment
    ``b = S*b1 + (1-S)*b0``.
    """

    eps: float = 0.5
    b0: float = 0.2
    b1: float = 1.0

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    def base(self, s):
        s = np.asarray(s, dtype=float)
        return s * self.b1 + (1.0 - s) * self.b0

    def apply(self, x, yhat, y, s, w_x, rng=None):
        x = np.asarray(x, dtype=float)
        yhat = np.asarray(yhat)
        y = np.asarray(y)
        b = self.base(s)
        if b.ndim == x.ndim - 1:
            b = b[..., None]
        step = np.where(yhat == 1, np.where(y == 1, 1.0, -1.0), 0.0)[..., None]
        return x + self.eps * step * np.asarray(w_x, dtype=float) + b

    def outcomes(self, x, s, w_x):
        """The three reachable successors of ``x``: (grant+repay, grant+default, reject)."""
        x = np.asarray(x, dtype=float)
        b = self.base(s)
        if b.ndim == x.ndim - 1:
            b = b[..., None]
        w_x = np.asarray(w_x, dtype=float)
        return (x + self.eps * w_x + b, x - self.eps * w_x + b, x + b)


@dataclass(frozen=True)
class TabularTransition:
    """Finite-state transition driven by the decision:
    ``table[j][a, b] = P(x'=states[b] | x=states[a], yhat)`` with ``j = 0`` for a
    rejection and ``j = 1`` for a grant."""

    states: np.ndarray
    table: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        table = np.asarray(self.table, dtype=float)
        k = states.shape[0]
        if table.shape != (2, k, k):
            raise DimensionError("table must have shape (2, n_states, n_states)")
        if np.any(table < 0) or not np.allclose(table.sum(axis=2), 1.0):
            raise ValueError("each transition row must be a probability vector")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "table", table)

    def index_of(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.abs(x[:, None, :] - self.states[None, :, :]).sum(axis=2)
        idx = d.argmin(axis=1)
        if np.any(d[np.arange(len(idx)), idx] > 1e-9):
            raise ValueError("feature value is not a tabulated state")
        return idx

    def apply(self, x, yhat, y, s, w_x, rng):
        return self.states[self.step_index(self.index_of(x), yhat, rng.random(len(x)))]

    def step_index(self, idx, yhat, u):
        j = (np.asarray(yhat) == 1).astype(int)
        cdf = np.cumsum(self.table[j, idx], axis=1)
        cdf[:, -1] = 1.0
        return (cdf < np.asarray(u)[:, None]).sum(axis=1).clip(0, self.states.shape[0] - 1)

    def density(self, x_next, x, yhat):
        a = self.index_of(x)
        b = self.index_of(x_next)
        j = (np.asarray(yhat) == 1).astype(int)
        return self.table[j, a, b]


# --------------------------------------------------------------------------


def default_partition(feature_dim: int) -> dict:
    return {"relevant": tuple(range(feature_dim)), "irrelevant": (), "redlining": ()}


@dataclass(frozen=True)
class TimeLaggedScm:
    feature_dim: int
    horizon: int
    init_sampler: object
    transition: object
    truth_model: DecisionModel
    partition: dict = field(default=None)

    def __post_init__(self):
        if self.partition is None:
            object.__setattr__(self, "partition", default_partition(self.feature_dim))
        else:
            object.__setattr__(self, "partition",
                               {k: tuple(int(i) for i in self.partition.get(k, ())) for k in ROLES})

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.init_sampler, TabularInit) and isinstance(self.transition,
                                                                          TabularTransition)

    def mask(self, role: str) -> np.ndarray:
        m = np.zeros(self.feature_dim, dtype=bool)
        m[list(self.partition[role])] = True
        return m

    def with_horizon(self, horizon: int) -> "TimeLaggedScm":
        return TimeLaggedScm(self.feature_dim, horizon, self.init_sampler, self.transition,
                             self.truth_model, self.partition)


def validate_scm(scm: TimeLaggedScm) -> list[str]:
    """Every invariant violation of ``scm``; an empty list means it is usable."""
    problems = []
    d = scm.feature_dim
    if not isinstance(d, (int, np.integer)) or d < 1:
        problems.append(f"feature_dim must be a positive integer, got {d!r}")
        return problems
    if not isinstance(scm.horizon, (int, np.integer)) or scm.horizon < 1:
        problems.append(f"horizon must be a positive integer, got {scm.horizon!r}")
    part = scm.partition
    relevant, irrelevant = set(part["relevant"]), set(part["irrelevant"])
    for i in sorted(relevant & irrelevant):
        problems.append(f"feature index {i} is both relevant and irrelevant")
    for i in range(d):
        if i not in relevant and i not in irrelevant:
            problems.append(f"feature index {i} is not assigned a role")
    for i in sorted((relevant | irrelevant | set(part["redlining"])) - set(range(d))):
        problems.append(f"feature index {i} is out of range for feature_dim {d}")
    for i in sorted(set(part["redlining"]) - relevant):
        problems.append(f"redlining feature {i} must be relevant (redlining is a subset of relevant)")
    if getattr(scm.init_sampler, "feature_dim", d) != d:
        problems.append("init_sampler feature dimension does not match feature_dim")
    if scm.truth_model is None:
        problems.append("truth_model is missing")
    elif scm.truth_model.feature_dim != d:
        problems.append("truth_model feature dimension does not match feature_dim")
    states = getattr(scm.transition, "states", None)
    if states is not None and np.asarray(states).reshape(len(states), -1).shape[1] != d:
        problems.append("transition states do not match feature_dim")
    return problems


def require_valid(scm: TimeLaggedScm) -> None:
    problems = validate_scm(scm)
    if problems:
        raise ValueError("invalid SCM: " + "; ".join(problems))


def mix_channels(x_hard: np.ndarray, x_ref: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Columns in ``mask`` come from ``x_hard``, the rest from ``x_ref``."""
    return np.where(mask, x_hard, x_ref)


def lending_scm(truth: DecisionModel, horizon: int, eps=0.5, b0=0.2, b1=1.0,
                init=None, partition=None) -> TimeLaggedScm:
    d = truth.feature_dim
    return TimeLaggedScm(
        feature_dim=d,
        horizon=horizon,
        init_sampler=init if init is not None else GaussianInit.default(d),
        transition=LendingTransition(eps, b0, b1),
        truth_model=truth,
        partition=partition,
    )


def draw_truth_model(feature_dim: int, seed: int, scale: float = 1.0) -> DecisionModel:
    rng = np.random.default_rng(seed)
    return DecisionModel(scale * rng.standard_normal(feature_dim + 2))


def as_array(seq: Sequence[float]) -> np.ndarray:
    return np.asarray(seq, dtype=float)
