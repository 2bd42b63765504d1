import copy
import csv
import io

import numpy as np
import pytest

from ltfair.causal import DecisionModel, draw_truth_model
from ltfair.datagen import GenConfig
from ltfair.evaluate import EvalReport, deploy_and_measure, emit_table, trend_slope


def test_saturated_truth_model_is_nearly_perfect():
    truth = DecisionModel(200.0 * draw_truth_model(2, 3).weights)
    scm = GenConfig(steps=3).build_scm(truth)
    rep = deploy_and_measure(scm, truth, n=4000, seed=1, effect_samples=500)
    assert min(rep.accuracy) >= 0.995


def test_blind_model_on_symmetric_world_has_no_effects():
    cfg = GenConfig(steps=4, b0=0.5, b1=0.5, group_means=[[0.0, 0.0], [0.0, 0.0]])
    truth = draw_truth_model(2, 0).weights.copy()
    truth[2] = 0.0  # repayment must not depend on S either
    scm = cfg.build_scm(DecisionModel(truth))
    blind = DecisionModel(np.array([0.7, -0.4, 0.0, 0.2]))
    rep = deploy_and_measure(scm, blind, n=500, seed=0, effect_samples=20_000)
    # 3 sigma of a difference of two proportions on 20000 draws each
    tol = 3 * np.sqrt(2 * 0.25 / 20_000)
    assert np.all(np.abs(rep.short_term) <= tol)
    assert np.all(np.abs(rep.long_term) <= tol)


def test_ranges_purity_and_determinism(small_lending):
    scm, _, _ = small_lending
    model = DecisionModel(np.array([0.5, 0.5, 1.0, -0.2]))
    before_model, before_scm = copy.deepcopy(model), copy.deepcopy(scm)
    a = deploy_and_measure(scm, model, n=800, seed=4, effect_samples=2000)
    b = deploy_and_measure(scm, model, n=800, seed=4, effect_samples=2000)
    assert a.to_dict() == b.to_dict()
    assert model == before_model
    assert np.array_equal(scm.truth_model.weights, before_scm.truth_model.weights)
    assert all(0 <= v <= 1 for v in a.accuracy)
    assert all(-1 <= v <= 1 for v in a.short_term + a.long_term)
    assert a.horizon == 3 and a.config["seed"] == 4 and "model_hash" in a.config


def test_first_step_long_term_uses_init_only():
    cfg = GenConfig(steps=2, group_means=[[0.0], [0.0]])
    scm = cfg.build_scm(draw_truth_model(1, 0))
    rep = deploy_and_measure(scm, DecisionModel(np.array([1.0, 0.0, 0.0])), n=100, seed=0,
                             effect_samples=5000)
    assert rep.long_term[0] == pytest.approx(0.0, abs=3 * np.sqrt(2 * 0.25 / 5000))


def test_invalid_population_size(small_lending):
    scm, _, _ = small_lending
    with pytest.raises(ValueError):
        deploy_and_measure(scm, DecisionModel.zeros(2), n=0)


def _rep(T, v=0.0):
    return EvalReport([0.5 + v] * T, [v] * T, [v * t for t in range(T)])


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_single_report_table():
    rows = _rows(emit_table({"RRM": _rep(2, 0.25)}))
    assert rows[0] == ["algorithm", "metric", "t=1", "t=2"]
    assert rows[1:] == [["RRM", "Acc", "0.750", "0.750"], ["RRM", "Short", "0.250", "0.250"],
                        ["RRM", "Long", "0.000", "0.250"]]


def test_table_one_shape():
    rows = _rows(emit_table({k: _rep(5) for k in ("RRM", "LR", "FMDP", "FMEO")}))
    assert len(rows) == 13 and all(len(r) == 7 for r in rows)


def test_empty_and_mismatched_inputs():
    with pytest.raises(ValueError):
        emit_table({})
    with pytest.raises(ValueError, match="mismatched"):
        emit_table({"a": _rep(2), "b": _rep(3)})


def test_replicate_std_columns():
    reps = [_rep(3, v) for v in (0.1, 0.2, 0.6)]
    rows = _rows(emit_table({"RRM": reps}))
    assert rows[0][-1] == "t=3_std"
    acc = rows[1]
    assert acc[2:5] == ["0.800"] * 3
    assert acc[5] == f"{np.std([0.6, 0.7, 1.1]):.3f}"


def test_trend_slope():
    assert trend_slope([0.1, 0.2, 0.3]) == pytest.approx(0.1)
    assert trend_slope([0.3, 0.1]) < 0
    assert trend_slope([0.4]) == 0.0
