"""Long-term fair sequential decision making on time-lagged causal models.

Quick tour::

    from ltfair import (GenConfig, draw_truth_model, generate_synthetic,
                        LossWeights, RrmConfig, rrm_fit, deploy_and_measure)

    truth = draw_truth_model(3, seed=24)
    cfg = GenConfig()
    scm = cfg.build_scm(truth)
    data = generate_synthetic(scm, cfg)
    model, trace = rrm_fit(scm, data, LossWeights(0.2, 0.4, 0.4, 0.4, 0.6), RrmConfig())
    print(deploy_and_measure(scm, model).long_term)
"""
from .baselines import BaselineSpec, fit_baseline, training_gap
from .causal import (S_MINUS, S_PLUS, DecisionModel, EmpiricalInit, GaussianInit,
                     LendingTransition, TabularInit, TabularTransition, TimeLaggedScm,
                     draw_truth_model, lending_scm, validate_scm)
from .datagen import (GenConfig, PanelDataset, SeedPopulation, generate_semi_synthetic,
                      generate_synthetic, ingest_csv_seed, load_panel, save_panel)
from .evaluate import EvalReport, deploy_and_measure, emit_table, trend_slope
from .intervene import (LONG_TERM, SHORT_TERM, InterventionSpec, effect, exact_effect,
                        exact_post_intervention, sample_post_intervention)
from .objective import FrozenBatch, LossWeights, components, total_grad, total_loss
from .sensitivity import (SensitivityReport, convergence_predicate, estimate_c,
                          estimate_curvature, estimate_eps_sensitivity, w1_1d, w1_samples,
                          w1_tables)
from .trainer import DivergenceError, InnerOptimizer, RrmConfig, RrmTrace, rrm_fit

__version__ = "0.1.0"
