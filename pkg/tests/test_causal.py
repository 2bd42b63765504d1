import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ltfair.causal import (DecisionModel, DimensionError, GaussianInit, LendingTransition,
                           TimeLaggedScm, decision_prob, draw_truth_model, lending_scm, score,
                           validate_scm)
from ltfair.datagen import GenConfig, generate_synthetic


def test_zero_model_scores_zero():
    m = DecisionModel.zeros(3)
    assert score(m, [0.4, -2.0, 7.0], 1) == 0.0
    assert decision_prob(m, [1.0, 1.0, 1.0], 0) == 0.5


def test_unit_weight_projection():
    m = DecisionModel(np.array([1.0, 0.0, 0.0, 0.0, 0.0]))
    assert score(m, [2.5, -1.0, 3.0], 1) == 2.5


def test_score_matches_independent_dot_product():
    truth = draw_truth_model(3, 7)
    cfg = GenConfig(n_individuals=50, steps=2, seed=3)
    ds = generate_synthetic(cfg.build_scm(truth), cfg)
    w = [float(v) for v in truth.weights]
    for i in range(10):
        x, s = ds.x[i, 1], int(ds.s[i])
        manual = sum(wi * xi for wi, xi in zip(w[:3], x)) + w[3] * s + w[4]
        assert score(truth, x, s) == pytest.approx(manual, abs=1e-12)


def test_sigmoid_at_one():
    m = DecisionModel(np.array([1.0, 0.0, 0.0]))
    assert round(float(decision_prob(m, [1.0], 0)), 6) == 0.731059
    assert math.isclose(float(decision_prob(m, [1.0], 0)), 1 / (1 + math.exp(-1)), rel_tol=1e-15)


def test_prob_approaches_one():
    m = DecisionModel(np.array([1.0, 0.0, 0.0]))
    probs = [float(decision_prob(m, [z], 0)) for z in (1, 5, 10, 20, 30)]
    assert all(a <= b for a, b in zip(probs, probs[1:]))
    assert probs[0] < probs[1] < probs[2]
    assert probs[-1] > 1 - 1e-12


def test_dimension_mismatch_raises():
    m = DecisionModel.zeros(2)
    with pytest.raises(DimensionError):
        score(m, [1.0, 2.0, 3.0], 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30, allow_nan=False))
def test_prob_symmetry_and_decision(a):
    assume(a == 0 or abs(a) > 1e-15)  # below this the sigmoid rounds to exactly 0.5
    m = DecisionModel(np.array([1.0, 0.0, 0.0]))
    p = float(decision_prob(m, [a], 0))
    q = float(decision_prob(m, [-a], 0))
    assert p + q == pytest.approx(1.0, abs=1e-12)
    assert (m.decide(np.array([[a]]), 0)[0] == 1) == (p >= 0.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 20), st.floats(0.01, 5))
def test_prob_strictly_monotone(a, gap):
    m = DecisionModel(np.array([1.0, 0.0, 0.0]))
    assert float(decision_prob(m, [a], 0)) < float(decision_prob(m, [a + gap], 0))


def test_model_roundtrip():
    m = draw_truth_model(4, 2)
    assert DecisionModel.from_dict(m.to_dict()) == m
    assert DecisionModel.from_dict(m.to_dict()) != DecisionModel.zeros(4)


def test_reference_scm_is_valid():
    scm = lending_scm(draw_truth_model(2, 0), 5)
    assert validate_scm(scm) == []


def test_partition_gap_names_the_index():
    scm = TimeLaggedScm(4, 3, GaussianInit.default(4), LendingTransition(),
                        draw_truth_model(4, 0),
                        {"relevant": (0, 1, 2), "irrelevant": (), "redlining": ()})
    problems = validate_scm(scm)
    assert any("3" in p and "role" in p for p in problems)


def test_redlining_must_be_relevant():
    scm = TimeLaggedScm(2, 3, GaussianInit.default(2), LendingTransition(),
                        draw_truth_model(2, 0),
                        {"relevant": (0,), "irrelevant": (1,), "redlining": (1,)})
    problems = validate_scm(scm)
    assert any("subset of relevant" in p for p in problems)


def test_nonpositive_dims_reported():
    scm = TimeLaggedScm(2, 0, GaussianInit.default(2), LendingTransition(), draw_truth_model(2, 0))
    assert any("horizon" in p for p in validate_scm(scm))


def test_gaussian_init_rejects_bad_covariance():
    with pytest.raises(ValueError):
        GaussianInit(np.zeros((2, 2)), np.array([[[1.0, 2.0], [0.0, 1.0]]] * 2))
    with pytest.raises(ValueError):
        GaussianInit(np.zeros((2, 2)), np.array([[[1.0, 0.0], [0.0, -1.0]]] * 2))


def test_gaussian_init_moments():
    init = GaussianInit(np.array([[0.0, 1.0], [2.0, -1.0]]),
                        np.array([np.eye(2), [[2.0, 0.5], [0.5, 1.0]]]))
    rng = np.random.default_rng(0)
    x = init.sample(np.ones(200_000, dtype=int), rng)
    assert np.allclose(x.mean(axis=0), [2.0, -1.0], atol=0.02)
    assert np.allclose(np.cov(x.T), [[2.0, 0.5], [0.5, 1.0]], atol=0.03)


def test_lending_transition_branches():
    tr = LendingTransition(0.5, 0.2, 1.0)
    x = np.zeros((3, 2))
    w = np.array([1.0, -2.0])
    out = tr.apply(x, np.array([1, 1, -1]), np.array([1, -1, 1]), np.array([1, 0, 1]), w)
    assert np.allclose(out[0], [0.5 + 1.0, -1.0 + 1.0])
    assert np.allclose(out[1], [-0.5 + 0.2, 1.0 + 0.2])
    assert np.allclose(out[2], [1.0, 1.0])
