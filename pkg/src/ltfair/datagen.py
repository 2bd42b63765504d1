"""Synthetic and CSV-seeded lending panels generated by the feedback rule."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .causal import (DecisionModel, EmpiricalInit, GaussianInit, LendingTransition,
                     TimeLaggedScm, require_valid)
from .io import SCHEMA_VERSION, atomic_write_text, dumps_line

log = logging.getLogger(__name__)


class CsvSeedError(ValueError):
    """Malformed seed CSV; message carries the offending row/column."""


@dataclass
class PanelDataset:
    """Trajectories ``(S, X^t, Y^t)`` for ``t = 1..l``.

    ``x`` has shape ``(n, l, d)``; ``y`` and ``yhat`` have shape ``(n, l)``.
    """

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    yhat: np.ndarray | None = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=int)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.yhat is not None:
            self.yhat = np.asarray(self.yhat, dtype=int)
        n = self.s.shape[0]
        if self.x.ndim != 3 or self.x.shape[0] != n or self.y.shape != self.x.shape[:2]:
            raise ValueError("inconsistent panel shapes")
        if not np.isin(self.s, (0, 1)).all():
            raise ValueError("protected attribute values must be 0 or 1")
        if not np.isin(self.y, (-1, 1)).all():
            raise ValueError("labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def l(self) -> int:
        return self.x.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.x.shape[2]

    def pooled(self, steps: int | None = None):
        """Flatten to rows ``(s, x, y)`` over the first ``steps`` time steps."""
        steps = self.l if steps is None else steps
        x = self.x[:, :steps].reshape(-1, self.feature_dim)
        s = np.repeat(self.s, steps)
        y = self.y[:, :steps].reshape(-1)
        return s, x, y

    def summary(self) -> dict:
        return {
            "n": self.n,
            "steps": self.l,
            "feature_dim": self.feature_dim,
            "group_sizes": {"s0": int((self.s == 0).sum()), "s1": int((self.s == 1).sum())},
            "label_base_rate": [float((self.y[:, t] == 1).mean()) for t in range(self.l)],
        }


@dataclass
class GenConfig:
    n_individuals: int = 5000
    steps: int = 5
    eps_update: float = 0.5
    b0: float = 0.2
    b1: float = 1.0
    group_means: list | None = None
    group_covs: list | None = None
    seed: int = 0

    def validate(self, feature_dim: int | None = None) -> None:
        if self.n_individuals < 1 or self.steps < 1:
            raise ValueError("n_individuals and steps must be positive")
        if self.eps_update < 0:
            raise ValueError("eps_update must be nonnegative")
        if feature_dim is not None:
            self.init_sampler(feature_dim)

    def init_sampler(self, feature_dim: int) -> GaussianInit:
        if self.group_means is None and self.group_covs is None:
            return GaussianInit.default(feature_dim)
        means = (np.stack([-np.ones(feature_dim), np.ones(feature_dim)])
                 if self.group_means is None else np.asarray(self.group_means, dtype=float))
        covs = np.eye(feature_dim) if self.group_covs is None else np.asarray(self.group_covs,
                                                                              dtype=float)
        return GaussianInit(means, covs)

    def transition(self) -> LendingTransition:
        return LendingTransition(self.eps_update, self.b0, self.b1)

    def build_scm(self, truth: DecisionModel, horizon: int | None = None, init=None,
                  partition=None) -> TimeLaggedScm:
        d = truth.feature_dim
        return TimeLaggedScm(d, self.steps if horizon is None else horizon,
                             self.init_sampler(d) if init is None else init,
                             self.transition(), truth, partition)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_transition(scm: TimeLaggedScm, cfg: GenConfig) -> None:
    tr = scm.transition
    if isinstance(tr, LendingTransition) and (tr.eps, tr.b0, tr.b1) != (cfg.eps_update, cfg.b0,
                                                                       cfg.b1):
        raise ValueError("SCM transition parameters disagree with the generation config")


def _simulate(scm: TimeLaggedScm, s: np.ndarray, x1: np.ndarray, steps: int,
              rng: np.random.Generator) -> PanelDataset:
    n, d = x1.shape
    truth = scm.truth_model
    xs = np.empty((n, steps, d))
    ys = np.empty((n, steps), dtype=int)
    yhats = np.empty((n, steps), dtype=int)
    x = x1
    for t in range(steps):
        xs[:, t] = x
        p = truth.prob(x, s)
        yhat = np.where(rng.random(n) < p, 1, -1)
        y = np.where(rng.random(n) < p, 1, -1)
        yhats[:, t] = yhat
        ys[:, t] = y
        if t + 1 < steps:
            x = scm.transition.apply(x, yhat, y, s, truth.w_x, rng)
    return PanelDataset(s, xs, ys, yhats)


def generate_synthetic(scm: TimeLaggedScm, cfg: GenConfig) -> PanelDataset:
    """Half the population per group, ``X^1`` from the group init, then ``steps-1``
    feedback updates with the ground-truth model deployed."""
    require_valid(scm)
    cfg.validate(scm.feature_dim)
    _check_transition(scm, cfg)
    init_seed, run_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    rng_init = np.random.default_rng(init_seed)
    s = rng_init.integers(0, 2, cfg.n_individuals)
    x1 = scm.init_sampler.sample(s, rng_init)
    return _simulate(scm, s, x1, cfg.steps, np.random.default_rng(run_seed))


@dataclass
class SeedPopulation:
    s: np.ndarray
    x: np.ndarray
    columns: list = field(default_factory=list)
    scale: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.s)

    def as_init(self) -> EmpiricalInit:
        return EmpiricalInit(self.s, self.x)


def _scale(x: np.ndarray, scale: str):
    if scale == "identity":
        return x, {"kind": "identity"}
    if scale == "zscore":
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        if np.any(sd == 0):
            raise CsvSeedError("cannot z-score a constant column")
        return (x - mu) / sd, {"kind": "zscore", "mean": mu.tolist(), "std": sd.tolist()}
    if scale == "log-zscore":
        if np.any(x < 0):
            raise CsvSeedError("log-zscore needs nonnegative values")
        z, info = _scale(np.log1p(x), "zscore")
        return z, {**info, "kind": "log-zscore"}
    if scale == "minmax":
        lo, hi = x.min(axis=0), x.max(axis=0)
        if np.any(hi == lo):
            raise CsvSeedError("cannot min-max scale a constant column")
        return (x - lo) / (hi - lo), {"kind": "minmax", "min": lo.tolist(), "max": hi.tolist()}
    raise ValueError(f"unknown scaling {scale!r}")


def ingest_csv_seed(path, feature_columns, n_rows: int, scale: str = "zscore",
                    protected_column: str | None = None, positive_value: str = "1",
                    shuffle_seed: int | None = None, balance: bool = False) -> SeedPopulation:
    """Read ``(S, X^1)`` rows from a headed CSV.

    Rows keep file order unless ``shuffle_seed`` is given. With ``balance`` the
    first ``n_rows // 2`` rows of each group are taken. Without a protected
    column, ``S`` is drawn as a fair coin from ``shuffle_seed`` (default 0).
    Scaling is computed on the ingested subset.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvSeedError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        wanted = list(feature_columns) + ([protected_column] if protected_column else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise CsvSeedError(f"{path}: missing column(s) {missing}")
        idx = [header.index(c) for c in feature_columns]
        pidx = header.index(protected_column) if protected_column else None
        rows = [(lineno, r) for lineno, r in enumerate(reader, start=2) if r]

    order = np.arange(len(rows))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(rows))

    def group_of(lineno, r):
        return int(r[pidx].strip() == str(positive_value))

    if balance:
        if pidx is None:
            raise ValueError("balance needs a protected column")
        half = n_rows // 2
        picked = {0: [], 1: []}
        for i in order:
            g = group_of(*rows[i])
            if len(picked[g]) < half:
                picked[g].append(i)
        for g in (0, 1):
            if len(picked[g]) < half:
                raise CsvSeedError(
                    f"{path}: need {half} rows with S={g}, file has only {len(picked[g])}")
        rank = np.empty(len(rows), dtype=int)
        rank[order] = np.arange(len(rows))
        chosen = sorted(picked[0] + picked[1], key=lambda i: rank[i])
    else:
        if n_rows > len(rows):
            raise CsvSeedError(
                f"{path}: requested {n_rows} rows but file has {len(rows)} "
                f"(short by {n_rows - len(rows)})")
        chosen = list(order[:n_rows])

    x = np.empty((len(chosen), len(idx)))
    s = np.empty(len(chosen), dtype=int)
    for k, i in enumerate(chosen):
        lineno, r = rows[i]
        for j, col in enumerate(idx):
            try:
                x[k, j] = float(r[col])
            except (ValueError, IndexError):
                cell = r[col] if col < len(r) else "<missing>"
                raise CsvSeedError(
                    f"{path}: row {lineno}, column {feature_columns[j]!r}: "
                    f"non-numeric value {cell!r}") from None
        if pidx is not None:
            s[k] = group_of(lineno, r)
    if pidx is None:
        s = np.random.default_rng(0 if shuffle_seed is None else shuffle_seed).integers(
            0, 2, len(chosen))
    x, info = _scale(x, scale)
    return SeedPopulation(s, x, list(feature_columns), info)


def generate_semi_synthetic(seedpop: SeedPopulation, scm: TimeLaggedScm,
                            cfg: GenConfig) -> PanelDataset:
    """Same dynamics as :func:`generate_synthetic`, started from a seed population."""
    if len(seedpop) == 0:
        raise ValueError("empty seed population")
    if seedpop.x.shape[1] != scm.feature_dim:
        raise ValueError(
            f"seed population has {seedpop.x.shape[1]} features, SCM expects {scm.feature_dim}")
    require_valid(scm)
    if cfg.steps < 1:
        raise ValueError("steps must be positive")
    _check_transition(scm, cfg)
    return _simulate(scm, seedpop.s.copy(), seedpop.x.copy(), cfg.steps,
                     np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1]))


# --------------------------------------------------------------------------
# persistence


def save_panel(dataset: PanelDataset, path, manifest: dict) -> None:
    """One JSON line per trajectory after a header line; ``manifest`` goes to a
    sidecar ``<path>.manifest.json``."""
    head = {"schema_version": SCHEMA_VERSION, "config_hash": manifest.get("config_hash"),
            "seed": manifest.get("seed")}
    lines = [dumps_line({"header": head})]
    for i in range(dataset.n):
        rec = {"id": i, "s": int(dataset.s[i]), "x": dataset.x[i].tolist(),
               "y": dataset.y[i].tolist()}
        if dataset.yhat is not None:
            rec["yhat"] = dataset.yhat[i].tolist()
        lines.append(dumps_line(rec))
    atomic_write_text(path, "".join(lines))
    atomic_write_text(Path(str(path) + ".manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_panel(path) -> tuple[PanelDataset, dict]:
    s, x, y, yhat = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "header" in rec:
                continue
            s.append(rec["s"])
            x.append(rec["x"])
            y.append(rec["y"])
            yhat.append(rec.get("yhat"))
    manifest_path = Path(str(path) + ".manifest.json")
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    yh = None if any(v is None for v in yhat) else np.array(yhat)
    return PanelDataset(np.array(s), np.array(x), np.array(y), yh), manifest
