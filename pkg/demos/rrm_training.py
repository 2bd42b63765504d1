"""
Repeated risk minimization
==========================

Training against a moving target: each round resamples the intervened
populations under the current model and refits. The parameter change per
round shrinks until the model is stable under its own feedback.

This runs a reduced version of the synthetic reference setting (fewer
individuals and samples) so it finishes in well under a minute.
"""
from ltfair import (GenConfig, LossWeights, RrmConfig, deploy_and_measure, draw_truth_model,
                    emit_table, generate_synthetic, rrm_fit)
from ltfair.baselines import BaselineSpec, fit_baseline

truth = draw_truth_model(3, seed=24)
cfg = GenConfig(n_individuals=2000, steps=5, seed=0)
scm = cfg.build_scm(truth)
panel = generate_synthetic(scm, cfg)

# utility, long-term and short-term weights, then the two hinge thresholds
weights = LossWeights(0.2, 0.4, 0.4, tau_l=0.4, tau_t=0.6, l2_reg=1e-3)
model, trace = rrm_fit(scm, panel, weights, RrmConfig(mc_samples=4000, seed=0))

print("round  delta       total loss")
for rec in trace.records:
    print(f"{rec.iteration:5d}  {rec.delta:.3e}  {rec.total:.4f}")
print("converged:", trace.converged)

reports = {
    "RRM": deploy_and_measure(scm, model, n=2000, seed=1, effect_samples=5000),
    "LR": deploy_and_measure(scm, fit_baseline(panel, BaselineSpec("LR")), n=2000, seed=1,
                             effect_samples=5000),
}
print(emit_table(reports))
