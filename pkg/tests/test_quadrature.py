import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aem import proposal as prop
from aem.errors import EvaluationError, UsageError
from aem.model import AEM
from aem.quadrature import (CalibrationReport, calibrate, conditional_log_z, integrate_log,
                            is_scaling_demo, log_trapezoid, relative_error)

from conftest import tiny_config

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class NormalEnergy(AEM):
    def neg_energy(self, tape, points, context, proposal=None):
        return tape.constant(-0.5 * points.value**2 - LOG_SQRT_2PI)


class ConstantEnergy(AEM):
    def neg_energy(self, tape, points, context, proposal=None):
        return tape.constant(np.full(points.value.shape, -math.log(2.0)))


class ProposalEnergy(AEM):
    def neg_energy(self, tape, points, context, proposal=None):
        return tape.constant(prop.log_prob(proposal, points.value))


def test_constant_integrand():
    for n in (2, 3, 17, 1000):
        assert log_trapezoid(np.zeros(n), 1.0 / (n - 1)) == pytest.approx(0.0, abs=1e-15)


def test_gaussian_integrand():
    g = np.linspace(-40, 40, 100001)
    assert abs(log_trapezoid(-0.5 * g * g, g[1] - g[0]) - LOG_SQRT_2PI) < 1e-7


def test_no_underflow():
    assert log_trapezoid(np.full(9, -2000.0), 1.0 / 8) == -2000.0


def test_needs_two_points():
    with pytest.raises(UsageError):
        log_trapezoid([0.0], 1.0)
    with pytest.raises(UsageError):
        log_trapezoid([0.0, 1.0], np.inf)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(-30, 30)),
       st.floats(1e-3, 10.0))
def test_matches_linear_trapezoid(f, dx):
    linear = dx * np.sum((np.exp(f[:-1]) + np.exp(f[1:])) / 2)
    assert log_trapezoid(f, dx) == pytest.approx(math.log(linear), rel=1e-12, abs=1e-12)


def test_doubling_refinement_shrinks():
    # a coarse start shows the successive changes shrinking before convergence
    res = integrate_log(lambda x: -0.5 * x * x, -8.0, 8.0, initial_points=5)
    assert res.converged
    assert abs(res.log_integral - LOG_SQRT_2PI) < 1e-7
    steps = np.abs(np.diff(res.history))
    assert np.all(steps[1:] < steps[:-1])


def test_cap_reports_non_convergence():
    # a kink defeats the trapezoid rule at tight tolerance within a small cap
    res = integrate_log(lambda x: -np.abs(x) * 50, -1.0, 1.3, initial_points=3, max_points=65, tol=1e-12)
    assert not res.converged and res.grid_points <= 65
    assert np.isfinite(res.log_integral)


def test_conditional_normal_stub():
    model = NormalEnergy(tiny_config(), seed=0)
    params, gamma = model.evaluate_conditionals(np.zeros((1, 3)))
    res = conditional_log_z(model, gamma[0, 1], params[0, 1])
    assert res.converged
    assert abs(res.log_integral) < 1e-7


def test_conditional_constant_on_uniform():
    model = ConstantEnergy(tiny_config(proposal="uniform"), seed=0)
    params, gamma = model.evaluate_conditionals(np.full((1, 3), 0.5))
    res = conditional_log_z(model, gamma[0, 2], params[0, 2])
    assert res.interval == (0.0, 1.0)
    assert res.log_integral == pytest.approx(-math.log(2.0), abs=1e-7)


def test_relative_error_definition():
    np.testing.assert_allclose(relative_error([1.1, -2.2, 5e-7], [1.0, -2.0, 0.0]),
                               [0.1, -0.1, 5e-7], rtol=1e-12)


def test_calibrate_proposal_stub_is_exact():
    model = ProposalEnergy(tiny_config(), seed=1)
    x = np.random.default_rng(2).standard_normal((40, 3))
    report = calibrate(model, x, (1, 20), np.random.default_rng(3), n_conditionals=30)
    assert report.relative_errors.shape == (2, 30)
    np.testing.assert_allclose(report.log_z, 0.0, atol=1e-7)
    assert np.all(report.dims >= 1)
    assert np.all(np.abs(report.absolute_errors + report.log_z) < 1e-12)
    lines = report.to_csv().splitlines()
    assert lines[0] == "S,p5,median,p95,median_abs_rel,median_abs_err"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "20"]


def test_calibrate_aborts_on_failed_quadrature(monkeypatch):
    import aem.quadrature as quad

    model = ProposalEnergy(tiny_config(), seed=1)
    x = np.random.default_rng(2).standard_normal((10, 3))
    real = quad.conditional_log_z

    def flaky(*args, **kw):
        res = real(*args, **kw)
        res.converged = False
        return res

    monkeypatch.setattr(quad, "conditional_log_z", flaky)
    with pytest.raises(EvaluationError, match="converge"):
        calibrate(model, x, (5,), np.random.default_rng(0), n_conditionals=10)


def test_calibrate_needs_two_dimensions():
    class Flat:
        dim = 1

    with pytest.raises(UsageError):
        calibrate(Flat(), np.zeros((3, 1)))


def test_report_percentiles_over_fixed_set():
    rel = np.array([np.linspace(-1, 1, 101), np.linspace(-0.1, 0.1, 101)])
    rep = CalibrationReport([20, 200], rel, rel, np.ones(101), np.zeros(101), np.ones(101))
    (s, p5, med, p95, mabs, _), second = rep.summary()
    assert (s, med) == (20, pytest.approx(0.0, abs=1e-15))
    assert p5 == pytest.approx(-0.9) and p95 == pytest.approx(0.9)
    assert second[4] < mabs


def test_is_demo_shapes_and_weight_moment():
    out = is_scaling_demo([1, 3], np.random.default_rng(0), trials=7, n_samples=5)
    assert set(out) == {1, 3} and out[1].shape == (7,)
    # one-sample estimates are single weights; check E[w^2] at D = 1
    w = np.exp(is_scaling_demo([1], np.random.default_rng(1), trials=100000, n_samples=1)[1])
    assert abs(np.mean(w**2) - 1.0718662) < 3 * 0.0014330
    assert abs(np.mean(w) - 1.0) < 3 * math.sqrt(0.0718662 / 1e5)


def test_is_demo_rejects_bad_dimension():
    with pytest.raises(UsageError):
        is_scaling_demo([0], np.random.default_rng(0))
