import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aem import proposal as prop
from aem.autodiff import Tape
from aem.errors import EvaluationError, UsageError
from aem.quadrature import integrate_log

from conftest import finite_difference, max_rel_error

raw_entries = st.floats(-6, 6, allow_nan=False)


def _single(loc=0.0, scale=1.0):
    return prop.MixtureParams(coefficients=np.array([1.0]), locations=np.array([loc]),
                              scales=np.array([scale]))


def test_constrain_examples():
    raw = np.array([0.7, 0.7, 0.7, 1.0, -2.0, 3.0, 0.0, -40.0, 5.0])
    p = prop.constrain(raw)
    np.testing.assert_allclose(p.coefficients, 1 / 3, rtol=1e-15)
    np.testing.assert_array_equal(p.locations, [1.0, -2.0, 3.0])
    assert p.scales[0] == pytest.approx(1e-3 + math.log(2), rel=1e-15)
    assert 1e-3 <= p.scales[1] < 1e-3 + 1e-15
    assert p.scales[2] == pytest.approx(1e-3 + math.log1p(math.exp(5.0)), rel=1e-15)


def test_constrain_rejects_non_finite_with_row():
    raw = np.zeros((4, 6))
    raw[2, 3] = np.nan
    with pytest.raises(EvaluationError, match=r"\(2,\)"):
        prop.constrain(raw)


def test_constrain_needs_multiple_of_three():
    with pytest.raises(UsageError):
        prop.constrain(np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 12), elements=raw_entries))
def test_constrained_invariants(raw):
    p = prop.constrain(raw)
    assert np.all(p.coefficients >= 0)
    np.testing.assert_allclose(p.coefficients.sum(-1), 1.0, atol=1e-12)
    assert np.all(p.scales >= 1e-3)


def test_standard_normal_log_prob():
    assert prop.log_prob(_single(), np.array(0.0)) == pytest.approx(-0.9189385, abs=1e-7)


def test_uniform_log_prob():
    u = prop.MixtureParams.uniform(0.0, 1.0)
    assert prop.log_prob(u, 0.3) == 0.0
    assert prop.log_prob(u, 1.3) == -np.inf
    assert prop.log_prob(prop.MixtureParams.uniform(-2, 2), 0.0) == pytest.approx(-math.log(4))


def test_uniform_rejects_empty_interval():
    with pytest.raises(UsageError):
        prop.MixtureParams.uniform(1.0, 1.0)


def test_symmetric_pair():
    mu = 1.3
    p = prop.MixtureParams(coefficients=np.array([0.5, 0.5]), locations=np.array([-mu, mu]),
                           scales=np.array([0.7, 0.7]))
    expected = math.log(math.exp(-0.5 * (mu / 0.7) ** 2) / (0.7 * math.sqrt(2 * math.pi)))
    assert prop.log_prob(p, np.array(0.0)) == pytest.approx(expected, rel=1e-14)
    x = np.array([0.4, 2.5])
    np.testing.assert_array_equal(prop.log_prob(p, x), prop.log_prob(p, -x))


def test_log_prob_batched_shapes():
    p = prop.constrain(np.random.default_rng(0).standard_normal((4, 5, 6)))
    assert prop.log_prob(p, np.zeros((4, 5))).shape == (4, 5)
    assert prop.log_prob(p, np.zeros((4, 5, 7))).shape == (4, 5, 7)


def test_log_prob_finite_far_from_mass():
    p = _single(0.0, 1e-3)
    assert np.isfinite(prop.log_prob(p, np.array(1e3)))


def test_sample_uniform_statistics():
    x = prop.sample(prop.MixtureParams.uniform(0.0, 1.0), 100000, np.random.default_rng(1))
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert abs(x.mean() - 0.5) < 3 * math.sqrt(1 / 12 / 1e5)


def test_sample_normal_variance():
    x = prop.sample(_single(), 100000, np.random.default_rng(2))
    assert abs(x.var() - 1.0) < 3 * math.sqrt(2 / 1e5)


def test_sample_degenerate_coefficients():
    p = prop.MixtureParams(coefficients=np.array([1.0, 0.0, 0.0]), locations=np.array([5.0, -5.0, 0.0]),
                           scales=np.array([0.1, 0.1, 0.1]))
    comp, _ = prop.draw_noise(p, 1000, np.random.default_rng(3))
    assert np.all(comp == 0)
    assert prop.sample(p, 1000, np.random.default_rng(3)).min() > 4.0


def test_sample_count_must_be_positive():
    with pytest.raises(UsageError):
        prop.sample(_single(), 0, np.random.default_rng(0))


def test_own_samples_match_negative_entropy():
    x = prop.sample(_single(), 100000, np.random.default_rng(4))
    lp = prop.log_prob(_single(), x)
    neg_entropy = -0.5 * (1 + math.log(2 * math.pi))
    assert abs(lp.mean() - neg_entropy) < 3 * math.sqrt(0.5 / 1e5)


def test_normalisation_by_quadrature():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = prop.constrain(rng.standard_normal(30) * 2)
        lo, hi = prop.support(p)
        res = integrate_log(lambda g: prop.log_prob(p, g), float(lo), float(hi))
        assert res.converged
        assert abs(res.log_integral) < 1e-7


def test_support_covers_components():
    p = prop.constrain(np.array([0.0, 0.0, -1.0, 2.0, 0.0, 0.0]))
    lo, hi = prop.support(p)
    assert lo == pytest.approx(-1.0 - 20 * p.scales[0])
    assert hi == pytest.approx(2.0 + 20 * p.scales[1])
    ulo, uhi = prop.support(prop.MixtureParams.uniform(-2.0, 2.0))
    assert (ulo, uhi) == (pytest.approx(-2.4), pytest.approx(2.4))


def test_uniform_batch_indexing():
    u = prop.MixtureParams.uniform(0, 1, (4, 3))
    assert u[:, 1].batch_shape == (4,)
    assert u.reshape((12,)).batch_shape == (12,)


def test_tape_version_matches_and_differentiates():
    rng = np.random.default_rng(6)
    raw = rng.standard_normal((3, 9))
    x = rng.standard_normal((3, 5))

    def value():
        tape = Tape()
        mix = prop.constrain_nodes(tape, tape.constant(raw))
        return float(np.sum(prop.log_prob_nodes(tape, mix, tape.constant(x)).value))

    tape = Tape()
    r = tape.variable(raw)
    mix = prop.constrain_nodes(tape, r)
    out = prop.log_prob_nodes(tape, mix, tape.constant(x))
    np.testing.assert_allclose(out.value, prop.log_prob(prop.constrain(raw), x), rtol=1e-13)
    tape.backward(tape.sum(out))
    assert max_rel_error(tape.grad(r), finite_difference(value, raw)) < 1e-7
