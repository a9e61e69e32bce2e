"""
ResMADE degrees and masks
=========================

Sequential hidden degrees make every hidden layer share one degree vector,
which is what lets residual connections keep the autoregressive property.
"""

import numpy as np

from aem.config import ModelConfig
from aem.model import AEM
from aem.resmade import assign_degrees, build_masks

a = assign_degrees(3, 4)
proj, hidden, out = build_masks(a, n_blocks=1)
print("hidden degrees", a.hidden_degrees)
print("input mask\n", proj.astype(int))
print("hidden mask\n", hidden[0].astype(int))
print("output mask (strict)\n", out.astype(int))

###############################################################################
# Changing x_3..x_5 leaves the outputs for dimension 3 untouched, bit for bit.

model = AEM(ModelConfig(dim=5, resmade_hidden_dim=32, context_dim=8, enn_hidden_dim=8), seed=0)
rng = np.random.default_rng(1)
a_in = rng.standard_normal((4, 5))
b_in = a_in.copy()
b_in[:, 2:] = rng.standard_normal((4, 3))
phi_a, gamma_a = model.evaluate_conditionals(a_in)
phi_b, gamma_b = model.evaluate_conditionals(b_in)
print("dimension 3 context unchanged:", np.array_equal(gamma_a[:, 2], gamma_b[:, 2]))
print("dimension 4 context unchanged:", np.array_equal(gamma_a[:, 3], gamma_b[:, 3]))
