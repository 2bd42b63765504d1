"""Deployment simulation with feedback, and Table-style reporting."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .causal import DecisionModel, TimeLaggedScm, require_valid
from .intervene import LONG_TERM, SHORT_TERM, effect
from .io import config_hash

METRICS = ("Acc", "Short", "Long")


@dataclass
class EvalReport:
    accuracy: list
    short_term: list
    long_term: list
    config: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.accuracy)

    def metric(self, name: str) -> list:
        return {"Acc": self.accuracy, "Short": self.short_term, "Long": self.long_term}[name]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(d["accuracy"], d["short_term"], d["long_term"], d.get("config", {}))


def deploy_and_measure(scm: TimeLaggedScm, model: DecisionModel, n: int = 5000,
                       seed: int = 0, effect_samples: int | None = None) -> EvalReport:
    """Roll a fresh population forward with ``model`` deciding and the ground
    truth deciding repayment; report per-step accuracy and both effects.

    Long-term fairness at step ``t`` is the long-term effect with the horizon
    truncated to ``t``.
    """
    require_valid(scm)
    if n < 1:
        raise ValueError("n must be at least 1")
    m = n if effect_samples is None else effect_samples
    pop_seed, eff_seed = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(pop_seed)
    s = rng.integers(0, 2, n)
    x = scm.init_sampler.sample(s, rng)
    acc = []
    for t in range(scm.horizon):
        yhat = model.decide(x, s)
        y = np.where(rng.random(n) < scm.truth_model.prob(x, s), 1, -1)
        acc.append(float((yhat == y).mean()))
        if t + 1 < scm.horizon:
            x = scm.transition.apply(x, yhat, y, s, model.w_x, rng)
    eff_entropy = int(eff_seed.generate_state(1)[0])
    short = [effect(scm, model, SHORT_TERM, m, (eff_entropy, t), t=t)
             for t in range(1, scm.horizon + 1)]
    long = [effect(scm, model, LONG_TERM, m, (eff_entropy, t), t=t)
            for t in range(1, scm.horizon + 1)]
    echo = {"seed": seed, "n": n, "effect_samples": m,
            "model_hash": config_hash(model.weights.tolist())}
    return EvalReport(acc, short, long, echo)


def trend_slope(values: Sequence[float]) -> float:
    """Least-squares slope of ``values`` against ``1..len(values)``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(np.polyfit(np.arange(1, v.size + 1), v, 1)[0])


def emit_table(reports: Mapping[str, EvalReport | Sequence[EvalReport]]) -> str:
    """CSV with one row per (algorithm, metric) and one column per time step.

    An algorithm given several replicate reports gets their mean in the step
    columns and their standard deviation in appended ``_std`` columns.
    """
    if not reports:
        raise ValueError("no reports to tabulate")
    groups = {name: [r] if isinstance(r, EvalReport) else list(r) for name, r in reports.items()}
    horizons = {r.horizon for reps in groups.values() for r in reps}
    if len(horizons) != 1:
        raise ValueError(f"reports have mismatched horizons {sorted(horizons)}")
    T = horizons.pop()
    with_std = any(len(reps) > 1 for reps in groups.values())
    header = ["algorithm", "metric"] + [f"t={t}" for t in range(1, T + 1)]
    if with_std:
        header += [f"t={t}_std" for t in range(1, T + 1)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for name, reps in groups.items():
        if not reps:
            raise ValueError(f"algorithm {name!r} has no reports")
        for metric in METRICS:
            vals = np.array([r.metric(metric) for r in reps], dtype=float)
            row = [name, metric] + [f"{v:.3f}" for v in vals.mean(axis=0)]
            if with_std:
                row += [f"{v:.3f}" for v in vals.std(axis=0)]
            w.writerow(row)
    return buf.getvalue()
