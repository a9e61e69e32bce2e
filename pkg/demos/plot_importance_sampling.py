"""
Importance sampling and dimension
=================================

``Z_hat`` is unbiased, but ``log Z_hat`` is biased low, and the bias grows with
dimension because the weights become heavy-tailed. Per-dimension estimates, as
in the autoregressive model, avoid this.
"""

import math

import numpy as np

from aem import proposal as prop
from aem.model import importance_log_z
from aem.quadrature import is_scaling_demo

n = 100000
q = prop.MixtureParams(coefficients=np.ones((n, 1)), locations=np.zeros((n, 1)),
                       scales=np.full((n, 1), 1.25))
log_z = importance_log_z(lambda pts, rows: -0.5 * pts * pts, q, 1, np.random.default_rng(0))
print(f"mean Z_hat {np.exp(log_z).mean():.4f}  vs  sqrt(2 pi) {math.sqrt(2 * math.pi):.4f}")
print(f"mean log Z_hat {log_z.mean():+.4f}  vs  log sqrt(2 pi) {0.5 * math.log(2 * math.pi):.4f}")

###############################################################################
# Median log Z_hat of a normalised Gaussian (true value 0) with 20 samples.

trials = is_scaling_demo([1, 4, 16, 64], np.random.default_rng(0), trials=2000)
for d, values in trials.items():
    print(f"D={d:3d}  median log Z_hat {np.median(values):+.4f}")
