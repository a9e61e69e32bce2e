import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aem.autodiff import ParameterStore, Tape
from aem.energy import EnergyNet, EnergyNetConfig
from aem.errors import ConfigurationError
from aem.model import AEM

from conftest import finite_difference, max_rel_error, tiny_config


def _net(seed=0, **kw):
    cfg = EnergyNetConfig(**{**dict(context_dim=3, hidden_dim=6, n_blocks=2), **kw})
    store = ParameterStore()
    return store, EnergyNet(store, cfg, rng=np.random.default_rng(seed))


def _neg_energy(store, net, x, ctx):
    tape = Tape(store, grad=False)
    return net.forward(tape, tape.constant(x), tape.constant(ctx)).value


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.sampled_from(["relu", "tanh"]))
def test_output_non_positive(seed, scale, activation):
    store, net = _net(seed, activation=activation)
    rng = np.random.default_rng(seed)
    out = _neg_energy(store, net, scale * rng.standard_normal((4, 5)), rng.standard_normal((4, 3)))
    assert np.all(out <= 0)


def test_zero_weights_give_constant():
    store, net = _net()
    for name, value in store.items():
        store[name] = np.zeros_like(value)
    store["enn.out.b"] = np.array([0.8])
    rng = np.random.default_rng(1)
    out = _neg_energy(store, net, rng.standard_normal((3, 4)), rng.standard_normal((3, 3)))
    np.testing.assert_array_equal(out, -np.logaddexp(0.0, 0.8))


def test_split_projection_equals_concatenated_affine():
    store, net = _net(n_blocks=0)
    rng = np.random.default_rng(2)
    x, ctx = rng.standard_normal((3, 2)), rng.standard_normal((3, 3))
    inp = np.concatenate([x.reshape(6, 1), np.repeat(ctx, 2, axis=0)], axis=1)
    h = inp @ store["enn.proj.W"].T + store["enn.proj.b"]
    o = np.maximum(h, 0) @ store["enn.out.W"].T + store["enn.out.b"]
    np.testing.assert_allclose(_neg_energy(store, net, x, ctx), -np.logaddexp(0, o).reshape(3, 2),
                               rtol=1e-13)


def test_batched_matches_per_row():
    # BLAS blocking differs with the row count, so agreement is to rounding, not bitwise
    store, net = _net(hidden_dim=64, context_dim=8)
    rng = np.random.default_rng(3)
    x, ctx = rng.standard_normal((50, 7)), rng.standard_normal((50, 8))
    full = _neg_energy(store, net, x, ctx)
    rows = np.concatenate([_neg_energy(store, net, x[i:i + 1], ctx[i:i + 1]) for i in range(50)])
    np.testing.assert_allclose(full, rows, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(full, _neg_energy(store, net, x, ctx))


def test_context_width_mismatch():
    store, net = _net()
    with pytest.raises(ConfigurationError, match="context"):
        _neg_energy(store, net, np.zeros((2, 3)), np.zeros((2, 4)))


def test_config_mismatch_with_store():
    store, _ = _net()
    with pytest.raises(ConfigurationError, match="projection"):
        EnergyNet(store, EnergyNetConfig(context_dim=5, hidden_dim=6, n_blocks=2))


def test_unknown_activation():
    with pytest.raises(ConfigurationError):
        _net(activation="gelu")


def test_parameters_do_not_depend_on_dimension():
    shapes = []
    for dim in (2, 5):
        model = AEM(tiny_config(dim=dim), seed=0)
        shapes.append({n: v.shape for n, v in model.store.items() if n.startswith("enn.")})
    assert shapes[0] == shapes[1]


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradients_match_finite_differences(activation):
    store, net = _net(seed=4, activation=activation)
    rng = np.random.default_rng(5)
    for name, value in store.items():
        if name.endswith("b") or name.endswith(("b1", "b2")):
            store[name] = 0.1 * rng.standard_normal(value.shape)
    x, ctx = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))

    def value():
        return float(np.sum(_neg_energy(store, net, x, ctx)))

    tape = Tape(store)
    xv = tape.variable(x)
    tape.backward(tape.sum(net.forward(tape, xv, tape.constant(ctx))))
    assert max_rel_error(tape.grad(xv), finite_difference(value, x)) < 1e-7
    for name in store.names():
        assert max_rel_error(store.grad(name), finite_difference(value, store[name])) < 1e-7, name
