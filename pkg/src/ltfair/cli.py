"""Command-line harness: ``ltfair {generate,train,evaluate,sweep,sensitivity}``.

Every subcommand reads one JSON run config (``--config``; the built-in
synthetic reference when omitted) and applies flag overrides on top, so that
``--set training.weights.tau_l=0.5`` or ``--seed 3`` always win over the file.

Output layout under ``output_dir``::

    panel.jsonl, panel.jsonl.manifest.json     generate
    models/<ALG>.json                          train
    rrm_trace.jsonl, convergence.csv           train (when RRM is requested)
    eval/<ALG>_rep<k>.json, table.csv          evaluate
    sweep.csv                                  sweep
    sensitivity.json                           sensitivity

JSON files carry ``schema_version``, ``config_hash`` and ``seed`` fields;
JSONL files start with a header record holding them; CSV files start with a
``#`` comment line holding them. The config hash ignores ``output_dir``.

Exit codes: 0 success, 2 invalid config, 3 missing or unreadable input,
4 divergence, 5 partial failure of a sweep.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
import zlib
from pathlib import Path

import numpy as np

from .baselines import BaselineSpec, fit_baseline
from .causal import DecisionModel, draw_truth_model
from .datagen import (CsvSeedError, GenConfig, generate_semi_synthetic, generate_synthetic,
                      ingest_csv_seed, load_panel, save_panel)
from .evaluate import EvalReport, deploy_and_measure, emit_table
from .intervene import LONG_TERM, InterventionSpec
from .io import SCHEMA_VERSION, atomic_write_text, config_hash, dumps_line
from .objective import LossWeights
from .sensitivity import (SensitivityReport, convergence_predicate, diameter, estimate_c, estimate_curvature,
                          estimate_eps_sensitivity)
from .trainer import DivergenceError, RrmConfig, rrm_fit, sample_batch

log = logging.getLogger("ltfair")

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_DIVERGED, EXIT_PARTIAL = 0, 2, 3, 4, 5

ALGORITHMS = ("RRM", "LR", "FMDP", "FMEO")

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "scm": {"feature_dim": 3, "horizon": 5, "truth_seed": 24, "truth_scale": 1.0},
    "datagen": {
        "source": "synthetic",
        "n_individuals": 5000,
        "steps": 5,
        "eps_update": 0.5,
        "b0": 0.2,
        "b1": 1.0,
        "group_means": None,
        "group_covs": None,
        "csv": None,
    },
    "training": {
        "algorithms": list(ALGORITHMS),
        "weights": {"lambda_u": 0.2, "lambda_l": 0.4, "lambda_s": 0.4,
                    "tau_l": 0.4, "tau_t": 0.6, "l2_reg": 1e-3},
        "rrm": {"delta": 1e-4, "max_outer_iters": 50, "mc_samples": 10000,
                "inner": {"step": 1.0, "max_steps": 5000, "grad_tol": 1e-7}},
        "baselines": {"FMDP": {"fairness_budget": 0.0, "penalty_weight": 10.0},
                      "FMEO": {"fairness_budget": 0.0, "penalty_weight": 10.0}},
    },
    "eval": {"n": 5000, "replicates": 1, "effect_samples": None},
    "sweep": {"eps_list": [0.1, 0.5, 2.0, 5.0], "sensitivity": True},
    "sensitivity": {"clip": [-6.0, 12.0], "n": 2000, "pairs": 6, "radius": 0.25,
                    "probes": 200, "bandwidth": 0.5, "theta_samples": 6},
    "output_dir": "runs/synthetic",
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config handling


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=()) -> dict:
    """Defaults, then the file, then ``overrides`` as ``(dotted_key, value)`` pairs."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        csv_spec = (user.get("datagen") or {}).get("csv")
        if csv_spec and "path" in csv_spec and not Path(csv_spec["path"]).is_absolute():
            # relative CSV paths are resolved against the config file's directory
            csv_spec["path"] = str((Path(path).parent / csv_spec["path"]).resolve())
        cfg = _merge(cfg, user)
    for key, value in overrides:
        _set_path(cfg, key, value)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    """Cross-section checks, run before any work starts."""
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    scm, gen, tr, ev = cfg["scm"], cfg["datagen"], cfg["training"], cfg["eval"]
    d, horizon = scm.get("feature_dim"), scm.get("horizon")
    if not isinstance(d, int) or d < 1:
        raise ConfigError("scm.feature_dim must be a positive integer")
    if not isinstance(horizon, int) or horizon < 1:
        raise ConfigError("scm.horizon must be a positive integer")
    if gen["steps"] < horizon:
        raise ConfigError(f"datagen.steps ({gen['steps']}) is shorter than scm.horizon ({horizon})")
    if gen["source"] not in ("synthetic", "csv"):
        raise ConfigError("datagen.source is 'synthetic' or 'csv'")
    if gen["source"] == "csv":
        spec = gen.get("csv") or {}
        if "path" not in spec or "feature_columns" not in spec:
            raise ConfigError("datagen.csv needs 'path' and 'feature_columns'")
        if len(spec["feature_columns"]) != d:
            raise ConfigError(
                f"datagen.csv lists {len(spec['feature_columns'])} columns, scm.feature_dim is {d}")
    if gen.get("group_means") is not None and np.shape(gen["group_means"]) != (2, d):
        raise ConfigError(f"datagen.group_means must have shape (2, {d})")
    try:
        _gen_config(cfg, 0).validate(d if gen["source"] == "synthetic" else None)
        LossWeights(**tr["weights"])
        RrmConfig(**tr["rrm"])
        for kind, spec in tr.get("baselines", {}).items():
            BaselineSpec(kind, **spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    unknown = [a for a in tr["algorithms"] if a not in ALGORITHMS]
    if unknown:
        raise ConfigError(f"unknown algorithm(s) {unknown}; choose from {list(ALGORITHMS)}")
    if ev["n"] < 1 or ev["replicates"] < 1:
        raise ConfigError("eval.n and eval.replicates must be at least 1")


def run_hash(cfg: dict) -> str:
    return config_hash({k: v for k, v in cfg.items() if k != "output_dir"})


def data_hash(cfg: dict) -> str:
    """Hash of the sections that determine the generated panel."""
    return config_hash({k: cfg[k] for k in ("scm", "datagen", "seed")})


def derive_seed(root: int, name: str) -> int:
    """Named substream of the root seed."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def _stamp(cfg: dict, **extra) -> dict:
    return {"schema_version": SCHEMA_VERSION, "config_hash": run_hash(cfg),
            "seed": cfg["seed"], **extra}


def _csv_comment(cfg: dict) -> str:
    return f"# schema_version={SCHEMA_VERSION} config_hash={run_hash(cfg)} seed={cfg['seed']}\n"


def _csv_text(cfg: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write(_csv_comment(cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write_json(path: Path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# pipeline pieces


def _gen_config(cfg: dict, seed: int, eps=None) -> GenConfig:
    g = cfg["datagen"]
    return GenConfig(
        n_individuals=g["n_individuals"], steps=g["steps"],
        eps_update=g["eps_update"] if eps is None else eps, b0=g["b0"], b1=g["b1"],
        group_means=g.get("group_means"), group_covs=g.get("group_covs"), seed=seed)


def _seed_population(cfg: dict):
    c = cfg["datagen"]["csv"]
    return ingest_csv_seed(
        c["path"], c["feature_columns"], c.get("n_rows", cfg["datagen"]["n_individuals"]),
        c.get("scale", "zscore"), protected_column=c.get("protected_column"),
        positive_value=str(c.get("positive_value", "1")), shuffle_seed=c.get("shuffle_seed"),
        balance=c.get("balance", False))


def build_world(cfg: dict, eps=None):
    """``(scm, gen_config, seed_population_or_None)`` for a config."""
    s = cfg["scm"]
    truth = draw_truth_model(s["feature_dim"], s["truth_seed"], s.get("truth_scale", 1.0))
    gen = _gen_config(cfg, derive_seed(cfg["seed"], "datagen"), eps)
    pop = None
    if cfg["datagen"]["source"] == "csv":
        pop = _seed_population(cfg)
        scm = gen.build_scm(truth, s["horizon"], init=pop.as_init())
    else:
        scm = gen.build_scm(truth, s["horizon"])
    return scm, gen, pop


def make_dataset(cfg: dict, eps=None):
    scm, gen, pop = build_world(cfg, eps)
    if pop is None:
        return scm, gen, generate_synthetic(scm, gen)
    return scm, gen, generate_semi_synthetic(pop, scm, gen)


def _rrm_config(cfg: dict) -> RrmConfig:
    return RrmConfig(**cfg["training"]["rrm"], seed=derive_seed(cfg["seed"], "train"))


def _out(cfg: dict) -> Path:
    return Path(cfg["output_dir"])


def _panel_path(cfg: dict) -> Path:
    return _out(cfg) / "panel.jsonl"


def _model_path(cfg: dict, alg: str) -> Path:
    return _out(cfg) / "models" / f"{alg}.json"


def _trace_text(cfg: dict, trace) -> str:
    head = dumps_line({"header": _stamp(cfg, converged=trace.converged,
                                        converged_at=trace.converged_at)})
    return head + trace.to_jsonl()


def _convergence_csv(cfg: dict, trace) -> str:
    rows = [[r.iteration, repr(r.delta), repr(r.total), r.inner_steps] for r in trace.records]
    return _csv_text(cfg, ["iteration", "delta", "total", "inner_steps"], rows)


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(cfg: dict, dry_run: bool = False) -> int:
    if dry_run:
        print(f"config ok (hash {run_hash(cfg)}); no files written")
        return EXIT_OK
    scm, gen, ds = make_dataset(cfg)
    manifest = _stamp(cfg, data_hash=data_hash(cfg), datagen=gen.to_dict(),
                      source=cfg["datagen"]["source"],
                      truth_model=scm.truth_model.to_dict(), summary=ds.summary())
    save_panel(ds, _panel_path(cfg), manifest)
    print(json.dumps(ds.summary(), sort_keys=True))
    return EXIT_OK


def _load_dataset(cfg: dict):
    path = _panel_path(cfg)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run 'generate' first")
    ds, manifest = load_panel(path)
    if manifest.get("data_hash") != data_hash(cfg):
        log.warning("panel was generated under data settings %s, current settings are %s",
                    manifest.get("data_hash"), data_hash(cfg))
    return ds


def _save_model(cfg: dict, alg: str, model: DecisionModel, extra=None) -> None:
    _write_json(_model_path(cfg, alg), _stamp(
        cfg, algorithm=alg, horizon=cfg["scm"]["horizon"], feature_dim=model.feature_dim,
        weights=model.weights.tolist(), **(extra or {})))


def cmd_train(cfg: dict, dry_run: bool = False) -> int:
    if dry_run:
        print(f"config ok (hash {run_hash(cfg)}); no files written")
        return EXIT_OK
    ds = _load_dataset(cfg)
    scm, _, _ = build_world(cfg)
    algs = cfg["training"]["algorithms"]
    for alg in algs:
        if alg == "RRM":
            continue
        spec = BaselineSpec(alg, **cfg["training"].get("baselines", {}).get(alg, {}))
        _save_model(cfg, alg, fit_baseline(ds, spec), {"baseline": spec.to_dict()})
        print(f"{alg}: fitted")
    if "RRM" in algs:
        weights = LossWeights(**cfg["training"]["weights"])
        rrm = _rrm_config(cfg)
        try:
            model, trace = rrm_fit(scm, ds, weights, rrm)
        except DivergenceError as exc:
            if exc.trace is not None:
                atomic_write_text(_out(cfg) / "rrm_trace.jsonl", _trace_text(cfg, exc.trace))
            print(f"RRM diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        atomic_write_text(_out(cfg) / "rrm_trace.jsonl", _trace_text(cfg, trace))
        atomic_write_text(_out(cfg) / "convergence.csv", _convergence_csv(cfg, trace))
        _save_model(cfg, "RRM", model, {"converged": trace.converged,
                                        "iterations": len(trace.records)})
        print(f"RRM: {len(trace.records)} iterations, converged={trace.converged}")
    return EXIT_OK


def load_model(cfg: dict, alg: str) -> DecisionModel:
    path = _model_path(cfg, alg)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run 'train' first")
    rec = json.loads(path.read_text(encoding="utf-8"))
    if rec.get("horizon") != cfg["scm"]["horizon"]:
        raise ConfigError(f"{path}: model horizon {rec.get('horizon')} differs from "
                          f"scm.horizon {cfg['scm']['horizon']}")
    return DecisionModel(np.asarray(rec["weights"], dtype=float))


def evaluate_models(cfg: dict, models: dict) -> dict:
    """``{alg: [EvalReport per replicate]}`` for already-built models."""
    scm, _, _ = build_world(cfg)
    ev = cfg["eval"]
    root = derive_seed(cfg["seed"], "eval")
    out = {}
    for alg, model in models.items():
        out[alg] = [deploy_and_measure(scm, model, ev["n"], (root + r) % 2**63,
                                       ev.get("effect_samples"))
                    for r in range(ev["replicates"])]
    return out


def cmd_evaluate(cfg: dict, dry_run: bool = False) -> int:
    if dry_run:
        print(f"config ok (hash {run_hash(cfg)}); no files written")
        return EXIT_OK
    models = {alg: load_model(cfg, alg) for alg in cfg["training"]["algorithms"]}
    reports = evaluate_models(cfg, models)
    for alg, reps in reports.items():
        for k, rep in enumerate(reps):
            _write_json(_out(cfg) / "eval" / f"{alg}_rep{k}.json",
                        _stamp(cfg, algorithm=alg, replicate=k, report=rep.to_dict()))
    table = emit_table(reports)
    atomic_write_text(_out(cfg) / "table.csv", _csv_comment(cfg) + table)
    print(table, end="")
    return EXIT_OK


SWEEP_COLUMNS = ["eps", "iteration", "delta", "converged", "c_hat", "bound_2mct", "margin",
                 "reciprocal_margin", "status"]


def run_sweep(cfg: dict, eps_list) -> tuple[list, list]:
    """Long-format rows (see ``SWEEP_COLUMNS``) and the per-eps summary.

    Each converged or capped run also gets a sensitivity report around its
    final model; its constants repeat on every row of that eps.
    """
    seen, eps_unique = set(), []
    for e in eps_list:
        e = float(e)
        if e in seen:
            log.warning("duplicate eps %g dropped from sweep", e)
            continue
        seen.add(e)
        eps_unique.append(e)
    weights = LossWeights(**cfg["training"]["weights"])
    rows, summary = [], []
    for eps in eps_unique:
        sens = ["", "", "", ""]
        margin = None
        try:
            scm, _, ds = make_dataset(cfg, eps)
            model, trace = rrm_fit(scm, ds, weights, _rrm_config(cfg))
            status = "ok"
            if cfg["sweep"].get("sensitivity", True):
                rep = sensitivity_report(cfg, model, eps)
                pred = convergence_predicate(rep)
                margin = pred.margin
                sens = [repr(rep.c_hat), repr(rep.bound_2mct), repr(pred.margin),
                        repr(pred.reciprocal_margin)]
        except Exception as exc:  # noqa: BLE001  per-eps isolation
            trace = getattr(exc, "trace", None)
            status = f"failed: {type(exc).__name__}: {exc}"
            log.error("sweep eps=%g failed: %s", eps, exc)
        records = trace.records if trace is not None else []
        converged = bool(trace is not None and trace.converged)
        for r in records:
            rows.append([eps, r.iteration, repr(r.delta), int(converged), *sens, status])
        if not records:
            rows.append([eps, 0, "", 0, *sens, status])
        summary.append({"eps": eps, "converged": converged, "iterations": len(records),
                        "margin": margin, "status": status})
    return rows, summary


def cmd_sweep(cfg: dict, eps_list=None, dry_run: bool = False) -> int:
    eps_list = cfg["sweep"]["eps_list"] if eps_list is None else eps_list
    if not eps_list:
        raise ConfigError("eps_list is empty")
    if dry_run:
        print(f"config ok (hash {run_hash(cfg)}); no files written")
        return EXIT_OK
    rows, summary = run_sweep(cfg, eps_list)
    atomic_write_text(_out(cfg) / "sweep.csv",
                      _csv_text(cfg, SWEEP_COLUMNS, rows))
    for s in summary:
        margin = "n/a" if s["margin"] is None else f"{s['margin']:.4g}"
        print(f"eps={s['eps']:g}: {s['iterations']} iterations, converged={s['converged']}, "
              f"margin={margin}, {s['status']}")
    return EXIT_OK if all(s["status"] == "ok" for s in summary) else EXIT_PARTIAL


def sensitivity_report(cfg: dict, model: DecisionModel, eps=None) -> SensitivityReport:
    """Empirical constants around ``model`` on the configured world (optionally
    with ``eps_update`` replaced)."""
    sc = cfg["sensitivity"]
    scm, _, ds = make_dataset(cfg, eps)
    rng = np.random.default_rng(derive_seed(cfg["seed"], "sensitivity"))
    th0 = model.weights
    jitter = lambda: th0 + sc["radius"] * rng.standard_normal(th0.size)  # noqa: E731
    pairs = [(jitter(), jitter()) for _ in range(sc["pairs"])]
    clip = tuple(sc["clip"])
    spec = InterventionSpec(LONG_TERM, 1, model, scm.horizon)
    eps_hat = estimate_eps_sensitivity(scm, pairs, spec, sc["n"], derive_seed(cfg["seed"], "eps"),
                                       clip=clip)
    probes = ds.x[rng.choice(ds.n, sc["probes"]), rng.integers(0, ds.l, sc["probes"])]
    c_hat = estimate_c(scm, [th0] + [p[0] for p in pairs], probes, sc["bandwidth"]).c_hat
    rrm = _rrm_config(cfg)
    batch = sample_batch(scm, ds, model, min(rrm.mc_samples, sc["n"]), rrm.seed)
    weights = LossWeights(**cfg["training"]["weights"])
    samples = [th0] + [th0 + 0.05 * sc["radius"] * rng.standard_normal(th0.size)
                       for _ in range(sc["theta_samples"] - 1)]
    gamma, beta = estimate_curvature(batch, weights, samples)
    return SensitivityReport(gamma, beta, c_hat, eps_hat, diameter(scm, clip), scm.horizon)


def cmd_sensitivity(cfg: dict, dry_run: bool = False) -> int:
    if dry_run:
        print(f"config ok (hash {run_hash(cfg)}); no files written")
        return EXIT_OK
    path = _model_path(cfg, "RRM")
    model = load_model(cfg, "RRM") if path.exists() else DecisionModel.zeros(
        cfg["scm"]["feature_dim"])
    rep = sensitivity_report(cfg, model)
    _write_json(_out(cfg) / "sensitivity.json", _stamp(cfg, **rep.to_dict()))
    print(json.dumps(rep.to_dict(), sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ltfair", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("generate", "simulate the panel dataset"),
                           ("train", "fit RRM and the requested baselines"),
                           ("evaluate", "deploy trained models and tabulate the metrics"),
                           ("sweep", "RRM convergence across eps_update values"),
                           ("sensitivity", "empirical convergence constants")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="JSON run config (defaults to the synthetic reference)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key; VALUE is parsed as JSON if possible")
        sp.add_argument("--seed", type=int, help="root seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--dry-run", action="store_true", help="validate the config and stop")
        if name == "train":
            sp.add_argument("--algorithms", nargs="+", choices=ALGORITHMS)
            sp.add_argument("--max-outer-iters", type=int)
        if name == "evaluate":
            sp.add_argument("--replicates", type=int)
            sp.add_argument("--algorithms", nargs="+", choices=ALGORITHMS)
        if name == "sweep":
            sp.add_argument("--eps", type=float, nargs="+", help="eps_update values")
    return p


def _overrides(args) -> list:
    pairs = []
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs.append((key.strip(), _parse_value(value)))
    if args.seed is not None:
        pairs.append(("seed", args.seed))
    if args.out is not None:
        pairs.append(("output_dir", args.out))
    if getattr(args, "algorithms", None):
        pairs.append(("training.algorithms", args.algorithms))
    if getattr(args, "replicates", None) is not None:
        pairs.append(("eval.replicates", args.replicates))
    if getattr(args, "max_outer_iters", None) is not None:
        pairs.append(("training.rrm.max_outer_iters", args.max_outer_iters))
    return pairs


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "generate":
            return cmd_generate(cfg, args.dry_run)
        if args.command == "train":
            return cmd_train(cfg, args.dry_run)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.dry_run)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.eps, args.dry_run)
        return cmd_sensitivity(cfg, args.dry_run)
    except (ConfigError, CsvSeedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
