"""
Feedback loops in a lending panel
=================================

A lender deploys a model, the decisions change who can build credit, and
the next round of applicants looks different. This script simulates that
loop on a small synthetic population and measures how the protected
attribute's influence builds up over time.
"""
import numpy as np

from ltfair import (BaselineSpec, GenConfig, deploy_and_measure, draw_truth_model, fit_baseline,
                    generate_synthetic)

# A ground-truth repayment model over three features, and the generator.
truth = draw_truth_model(3, seed=24)
cfg = GenConfig(n_individuals=2000, steps=5, eps_update=0.5, b0=0.2, b1=1.0, seed=0)
scm = cfg.build_scm(truth)
panel = generate_synthetic(scm, cfg)
print("panel shape (individuals, steps, features):", panel.x.shape)

# Group means drift apart: s+ gets the larger base increment every step.
for t in range(panel.l):
    gap = panel.x[panel.s == 1, t].mean(axis=0) - panel.x[panel.s == 0, t].mean(axis=0)
    print(f"t={t + 1}  mean feature gap s+ minus s-: {np.round(gap, 2)}")

# A plain logistic regression fitted on all time steps pooled together.
lr = fit_baseline(panel, BaselineSpec("LR"))
print("LR weights (features, s, bias):", np.round(lr.weights, 3))

# Deploy it on a fresh population. Long-term fairness at step t compares the
# chain started at s+ with the one started at s-, scored as if everyone were s-.
report = deploy_and_measure(scm, lr, n=2000, seed=1, effect_samples=5000)
for t, (acc, short, long) in enumerate(zip(report.accuracy, report.short_term,
                                           report.long_term), start=1):
    print(f"t={t}  acc={acc:.3f}  short={short:+.3f}  long={long:+.3f}")
