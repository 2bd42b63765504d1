import numpy as np
import pytest

from ltfair.causal import (DecisionModel, TabularInit, TabularTransition, TimeLaggedScm)
from ltfair.datagen import GenConfig, generate_synthetic
from ltfair.causal import draw_truth_model


def random_toy_scm(rng, horizon=3, n_bits=1, weight_scale=1.5):
    """Binary-feature SCM with random init and decision-driven transition tables."""
    states = np.array([[(k >> i) & 1 for i in range(n_bits)] for k in range(2 ** n_bits)],
                      dtype=float)
    k = len(states)
    init = TabularInit(states, rng.dirichlet(np.ones(k), size=2))
    table = rng.dirichlet(np.ones(k), size=(2, k))
    truth = DecisionModel(weight_scale * rng.standard_normal(n_bits + 2))
    return TimeLaggedScm(n_bits, horizon, init, TabularTransition(states, table), truth)


def random_model(rng, dim, scale=1.5):
    return DecisionModel(scale * rng.standard_normal(dim + 2))


@pytest.fixture
def toy_scm():
    return random_toy_scm(np.random.default_rng(123))


@pytest.fixture(scope="session")
def small_lending():
    """A 2-feature lending world and a 600-trajectory panel, 3 steps."""
    truth = draw_truth_model(2, 1)
    cfg = GenConfig(n_individuals=600, steps=3, seed=5)
    scm = cfg.build_scm(truth)
    return scm, cfg, generate_synthetic(scm, cfg)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
