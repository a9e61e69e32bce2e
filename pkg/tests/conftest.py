import numpy as np
import pytest

from aem.config import ModelConfig
from aem.model import AEM


def tiny_config(**kw):
    base = dict(dim=3, resmade_hidden_dim=6, resmade_blocks=2, context_dim=3,
                enn_hidden_dim=5, enn_blocks=2, mixture_comps=2)
    base.update(kw)
    return ModelConfig(**base)


def finite_difference(f, values, step=1e-6):
    """Central differences of scalar ``f()`` with respect to every entry of ``values`` (in place)."""
    grad = np.zeros_like(values)
    flat, gflat = values.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * step)
    return grad


def max_rel_error(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


@pytest.fixture
def tiny_model():
    return AEM(tiny_config(), seed=3)
