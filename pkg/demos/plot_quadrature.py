"""
Log-domain quadrature
=====================

The trapezoid rule run through logsumexp handles integrands far below the
float64 range, and grid doubling stops at seven significant figures.
"""

import math

import numpy as np

from aem import proposal as prop
from aem.quadrature import integrate_log, log_trapezoid

g = np.linspace(-40, 40, 100001)
print("log sqrt(2 pi) error:", log_trapezoid(-0.5 * g**2, g[1] - g[0]) - 0.5 * math.log(2 * math.pi))
print("integrand at -2000:", log_trapezoid(np.full(11, -2000.0), 0.1), "(expect -2000)")

###############################################################################
# Random mixture proposals integrate to one.

rng = np.random.default_rng(0)
for _ in range(5):
    p = prop.constrain(2.0 * rng.standard_normal(30))
    lo, hi = (float(v) for v in prop.support(p))
    res = integrate_log(lambda x: prop.log_prob(p, x), lo, hi)
    print(f"log integral {res.log_integral:+.1e} on {res.grid_points} points")
