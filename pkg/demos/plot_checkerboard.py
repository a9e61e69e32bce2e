"""
Checkerboard with a uniform proposal
====================================

With a fixed uniform proposal the energy network alone has to carve out the
empty squares. There is no warm-up since the proposal has nothing to learn.
"""

import os

import numpy as np

from aem.config import ModelConfig, TrainConfig
from aem.data import checkerboard_high, generate
from aem.model import estimate_log_prob, sir_sample
from aem.train import train

steps = int(os.environ.get("AEM_DEMO_STEPS", 1500))
model_cfg = ModelConfig(dim=2, proposal="uniform", uniform_lower=-2.0, uniform_upper=2.0,
                        resmade_hidden_dim=32, context_dim=16, enn_hidden_dim=32)
train_cfg = TrainConfig(batch_size=128, total_steps=steps, warm_up_steps=0,
                        val_interval=max(steps // 5, 1), val_rows=1000, seed=0)
result = train(model_cfg, train_cfg, generate("checkerboard", 100000, 1),
               generate("checkerboard", 2000, 2))
model = result.model

c = (np.arange(40) + 0.5) / 40 * 4 - 2
pts = np.stack([a.ravel() for a in np.meshgrid(c, c)], 1)
dens = np.exp(estimate_log_prob(model, pts, 500, np.random.default_rng(0)).log_p)
high = checkerboard_high(pts)
print(f"density ratio high/low squares {dens[high].mean() / dens[~high].mean():.1f}")
samples = sir_sample(model, 2000, np.random.default_rng(1))
print(f"SIR samples in low squares {np.mean(~checkerboard_high(samples)):.1%}")
