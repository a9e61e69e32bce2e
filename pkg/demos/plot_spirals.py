"""
Spirals end to end
==================

A short training run on the spirals data, followed by evaluation, sampling,
a density image, calibration of the normaliser and the KDE surrogate. Widths
and steps are kept small so this finishes in a few minutes; set
``AEM_DEMO_STEPS`` for a longer run.
"""

import os

import numpy as np

from aem.cli import density_grid, render_density, write_pgm
from aem.config import ModelConfig, TrainConfig
from aem.data import generate
from aem.model import estimate_log_prob, sir_sample, tune_kde
from aem.quadrature import calibrate
from aem.train import train

steps = int(os.environ.get("AEM_DEMO_STEPS", 1500))
x_train = generate("spirals", 100000, seed=1)
x_val = generate("spirals", 2000, seed=2)
x_test = generate("spirals", 2000, seed=3)

model_cfg = ModelConfig(dim=2, resmade_hidden_dim=32, context_dim=16, enn_hidden_dim=32,
                        mixture_comps=10)
train_cfg = TrainConfig(batch_size=128, total_steps=steps, warm_up_steps=steps // 5,
                        val_interval=max(steps // 5, 1), val_rows=1000, seed=0)
result = train(model_cfg, train_cfg, x_train, x_val,
               callback=lambda step, row: print(f"step {step}: val log p {row[3]:.3f}, log q {row[4]:.3f}"))
model = result.model

###############################################################################
# Test log likelihood of the energy model and of its proposal.

est = estimate_log_prob(model, x_test, 2000, np.random.default_rng(0))
print(f"AEM {est.log_p.mean():.3f} nats, proposal {est.log_q.mean():.3f} nats")

###############################################################################
# Samples, and a density image written as a PGM file.

samples = sir_sample(model, 1000, np.random.default_rng(1))
print("SIR sample mean", samples.mean(0))
_, _, log_p = density_grid(model, ((-2.5, 2.5), (-2.5, 2.5)), 60, 200, np.random.default_rng(2))
write_pgm("spirals_density.pgm", render_density(log_p))

###############################################################################
# Normaliser error against quadrature, and the tuned KDE surrogate.

report = calibrate(model, x_val, [20, 200, 2000], np.random.default_rng(3), n_conditionals=100)
for row in report.summary():
    print("S={} median |log Z error| {:.2e}".format(row[0], row[5]))
kde, scores = tune_kde(model, x_val[:100], np.random.default_rng(4), n_samples=2000)
print(f"KDE bandwidth {kde.bandwidth}, weight {kde.proposal_weight}, val {scores.max():.3f}")
