import hashlib
import math

import numpy as np
import pytest

from ltfair.causal import DecisionModel, draw_truth_model
from ltfair.datagen import (CsvSeedError, GenConfig, SeedPopulation, generate_semi_synthetic,
                            generate_synthetic, ingest_csv_seed, load_panel, save_panel)

DATA = __import__("pathlib").Path(__file__).resolve().parents[1] / "data" / "credit_standin.csv"


def _write(tmp_path, text, name="seed.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_frozen_dynamics_synthetic():
    cfg = GenConfig(n_individuals=200, steps=4, eps_update=0.0, b0=0.0, b1=0.0, seed=5)
    ds = generate_synthetic(cfg.build_scm(draw_truth_model(3, 1)), cfg)
    for t in range(1, 4):
        assert np.array_equal(ds.x[:, t], ds.x[:, 0])


def test_reference_shape_and_group_sizes():
    cfg = GenConfig(seed=0)
    ds = generate_synthetic(cfg.build_scm(draw_truth_model(3, 24)), cfg)
    assert ds.x.shape == (5000, 5, 3)
    n1 = int(ds.s.sum())
    assert abs(n1 - 2500) <= 3 * math.sqrt(5000 * 0.25)


def test_forced_rejection_branch_adds_b1():
    truth = DecisionModel(np.array([0.3, -0.1, 0.0, -1e4]))
    cfg = GenConfig(n_individuals=1, steps=2, eps_update=0.5, b0=0.2, b1=1.0, seed=0)
    pop = SeedPopulation(np.array([1]), np.array([[0.25, -3.0]]))
    ds = generate_semi_synthetic(pop, cfg.build_scm(truth), cfg)
    assert ds.yhat[0, 0] == -1
    assert np.array_equal(ds.x[0, 1], np.array([0.25 + 1.0, -3.0 + 1.0]))


def test_all_three_branches_follow_update_rule():
    truth = draw_truth_model(2, 3, scale=0.5)
    cfg = GenConfig(n_individuals=4000, steps=3, seed=1)
    ds = generate_synthetic(cfg.build_scm(truth), cfg)
    w = truth.weights[:2]
    seen = set()
    for t in range(2):
        yh, y, x = ds.yhat[:, t], ds.y[:, t], ds.x[:, t]
        b = np.where(ds.s == 1, cfg.b1, cfg.b0)[:, None]
        for branch, mask, step in (
                ("loss", (yh == 1) & (y == -1), -cfg.eps_update * w),
                ("repay", (yh == 1) & (y == 1), cfg.eps_update * w),
                ("reject", yh == -1, 0.0 * w)):
            if mask.any():
                seen.add(branch)
            assert np.allclose(ds.x[mask, t + 1], x[mask] + step + b[mask], atol=1e-12)
    assert seen == {"loss", "repay", "reject"}


def test_label_marginal_matches_sigmoid_single_point():
    truth = DecisionModel(np.array([0.8, -0.4, 0.5, 0.1]))
    n = 40_000
    pop = SeedPopulation(np.ones(n, dtype=int), np.tile([0.3, 0.7], (n, 1)))
    cfg = GenConfig(n_individuals=n, steps=1, seed=2)
    ds = generate_semi_synthetic(pop, cfg.build_scm(truth), cfg)
    p = 1 / (1 + math.exp(-(0.8 * 0.3 - 0.4 * 0.7 + 0.5 + 0.1)))
    for lab in (ds.y[:, 0], ds.yhat[:, 0]):
        freq = float((lab == 1).mean())
        assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_label_marginal_per_step_within_three_sigma():
    truth = draw_truth_model(2, 4)
    cfg = GenConfig(n_individuals=20_000, steps=4, seed=3)
    ds = generate_synthetic(cfg.build_scm(truth), cfg)
    for t in range(4):
        p = truth.prob(ds.x[:, t], ds.s)
        freq = float((ds.y[:, t] == 1).mean())
        sd = math.sqrt(float(np.sum(p * (1 - p)))) / ds.n
        assert abs(freq - float(p.mean())) <= 3 * sd


def test_labels_and_decisions_are_sampled_independently():
    truth = DecisionModel(np.array([0.0, 0.0, 0.0]))
    n = 40_000
    pop = SeedPopulation(np.zeros(n, dtype=int), np.zeros((n, 1)))
    cfg = GenConfig(n_individuals=n, steps=1, seed=4)
    ds = generate_semi_synthetic(pop, cfg.build_scm(truth), cfg)
    agree = float((ds.y[:, 0] == ds.yhat[:, 0]).mean())
    assert abs(agree - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_reproducible_and_seed_sensitive():
    truth = draw_truth_model(3, 2)
    cfg = GenConfig(n_individuals=300, steps=3, seed=9)
    a = generate_synthetic(cfg.build_scm(truth), cfg)
    b = generate_synthetic(cfg.build_scm(truth), cfg)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    cfg2 = GenConfig(n_individuals=300, steps=3, seed=10)
    c = generate_synthetic(cfg2.build_scm(truth), cfg2)
    assert not np.array_equal(a.x, c.x)


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(eps_update=-0.1).validate()
    with pytest.raises(ValueError):
        GenConfig(n_individuals=0).validate()
    with pytest.raises(ValueError):
        GenConfig(group_covs=[[[1.0, 0.0], [0.0, -2.0]]] * 2).validate(2)


def test_transition_mismatch_refused():
    truth = draw_truth_model(2, 0)
    scm = GenConfig(eps_update=0.5).build_scm(truth)
    with pytest.raises(ValueError):
        generate_synthetic(scm, GenConfig(eps_update=1.0))


# -- CSV seed ---------------------------------------------------------------

def test_identity_ingest_is_verbatim(tmp_path):
    p = _write(tmp_path, "a,b,c\n1.5,2,x\n-3,4.25,y\n0,0,z\n7,8e-3,w\n")
    pop = ingest_csv_seed(p, ["a", "b"], 4, scale="identity")
    assert np.array_equal(pop.x, np.array([[1.5, 2.0], [-3.0, 4.25], [0.0, 0.0], [7.0, 8e-3]]))


def test_short_file_names_shortfall(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3,4\n")
    with pytest.raises(CsvSeedError, match="short by 3"):
        ingest_csv_seed(p, ["a", "b"], 5, scale="identity")


def test_missing_column_named(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(CsvSeedError, match="'c'"):
        ingest_csv_seed(p, ["a", "c"], 1, scale="identity")


def test_non_numeric_cell_has_row_and_column(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n3,oops\n")
    with pytest.raises(CsvSeedError) as err:
        ingest_csv_seed(p, ["a", "b"], 2, scale="identity")
    assert "row 3" in str(err.value) and "'b'" in str(err.value)


def test_empty_file_and_missing_path(tmp_path):
    with pytest.raises(CsvSeedError):
        ingest_csv_seed(_write(tmp_path, ""), ["a"], 1)
    with pytest.raises(FileNotFoundError):
        ingest_csv_seed(tmp_path / "nope.csv", ["a"], 1)


def test_zscore_moments_on_reference_file():
    pop = ingest_csv_seed(DATA, ["PAY_AMT1", "PAY_AMT2"], 3000, scale="zscore")
    # independent recomputation from the raw rows
    import csv
    with DATA.open() as fh:
        rows = list(csv.DictReader(fh))[:3000]
    raw = np.array([[float(r["PAY_AMT1"]), float(r["PAY_AMT2"])] for r in rows])
    expected = (raw - raw.mean(axis=0)) / raw.std(axis=0)
    assert np.allclose(pop.x, expected, atol=1e-12)
    assert np.all(np.abs(pop.x.mean(axis=0)) <= 1e-9)
    assert np.all(np.abs(pop.x.std(axis=0) - 1) <= 1e-9)


def test_balanced_protected_ingest():
    pop = ingest_csv_seed(DATA, ["PAY_AMT1", "PAY_AMT2"], 3000, scale="log-zscore",
                          protected_column="SEX", positive_value="1", balance=True,
                          shuffle_seed=0)
    assert len(pop) == 3000 and int(pop.s.sum()) == 1500
    assert pop.scale["kind"] == "log-zscore"
    again = ingest_csv_seed(DATA, ["PAY_AMT1", "PAY_AMT2"], 3000, scale="log-zscore",
                            protected_column="SEX", positive_value="1", balance=True,
                            shuffle_seed=0)
    assert np.array_equal(pop.x, again.x) and np.array_equal(pop.s, again.s)


def test_semi_synthetic_shapes():
    pop = ingest_csv_seed(DATA, ["PAY_AMT1", "PAY_AMT2"], 3000, scale="zscore")
    truth = draw_truth_model(2, 11)
    cfg = GenConfig(n_individuals=3000, steps=4, seed=0)
    ds = generate_semi_synthetic(pop, cfg.build_scm(truth, init=pop.as_init()), cfg)
    assert ds.x.shape == (3000, 4, 2)
    one = GenConfig(n_individuals=3000, steps=1, seed=0)
    ds1 = generate_semi_synthetic(pop, one.build_scm(truth, init=pop.as_init()), one)
    assert ds1.x.shape == (3000, 1, 2) and np.array_equal(ds1.x[:, 0], pop.x)
    frozen = GenConfig(n_individuals=3000, steps=4, eps_update=0.0, b0=0.0, b1=0.0)
    dsf = generate_semi_synthetic(pop, frozen.build_scm(truth), frozen)
    assert all(np.array_equal(dsf.x[:, t], pop.x) for t in range(4))


def test_semi_synthetic_dimension_mismatch():
    pop = SeedPopulation(np.array([0, 1]), np.zeros((2, 3)))
    cfg = GenConfig(steps=2)
    with pytest.raises(ValueError, match="3 features"):
        generate_semi_synthetic(pop, cfg.build_scm(draw_truth_model(2, 0)), cfg)
    with pytest.raises(ValueError):
        generate_semi_synthetic(SeedPopulation(np.zeros(0, int), np.zeros((0, 2))),
                                cfg.build_scm(draw_truth_model(2, 0)), cfg)


def test_save_load_roundtrip_is_byte_stable(tmp_path):
    cfg = GenConfig(n_individuals=50, steps=3, seed=7)
    ds = generate_synthetic(cfg.build_scm(draw_truth_model(2, 0)), cfg)
    manifest = {"config_hash": "abc", "seed": 7, "gen": cfg.to_dict()}
    save_panel(ds, tmp_path / "a.jsonl", manifest)
    save_panel(ds, tmp_path / "b.jsonl", manifest)
    digest = [hashlib.sha256((tmp_path / f).read_bytes()).hexdigest() for f in ("a.jsonl", "b.jsonl")]
    assert digest[0] == digest[1]
    back, man = load_panel(tmp_path / "a.jsonl")
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)
    assert np.array_equal(back.yhat, ds.yhat) and man == manifest
