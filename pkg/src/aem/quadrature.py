"""Log-domain trapezoidal quadrature and normalizer calibration experiments.

``log_trapezoid`` integrates ``exp(f)`` from log values on a uniform grid
without ever leaving the log domain, so integrands far below the float64
underflow threshold are handled exactly. ``conditional_log_z`` refines the grid
by doubling until the log integral settles to seven significant figures.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import proposal as prop
from .autodiff import _logsumexp
from .errors import EvaluationError, UsageError
from .model import MAX_POINTS, _model_energy, importance_log_z

SIG_FIGS_TOL = 1e-7
INITIAL_POINTS = 1025
MAX_GRID_POINTS = 1 << 24


def log_trapezoid(log_values, spacing):
    """``log(dx/2) + logsumexp_i(logaddexp(f_i, f_{i+1}))`` over a uniform grid."""
    f = np.asarray(log_values, dtype=np.float64)
    if f.ndim != 1 or f.size < 2:
        raise UsageError("log_trapezoid needs at least 2 grid points")
    if not np.isfinite(spacing) or spacing <= 0:
        raise UsageError(f"grid spacing must be positive and finite, got {spacing}")
    m = np.max(f)
    if not np.isfinite(m):
        return float(m)
    # shift by the max so a constant integrand comes back exactly
    e = np.exp(f - m)
    return float(m + math.log(spacing / 2.0 * np.sum(e[:-1] + e[1:])))


@dataclass
class QuadratureResult:
    log_integral: float
    grid_points: int
    converged: bool
    interval: tuple
    history: list = field(default_factory=list, repr=False)


def integrate_log(log_fn, lower, upper, tol=SIG_FIGS_TOL, initial_points=INITIAL_POINTS,
                  max_points=MAX_GRID_POINTS):
    """Integrate ``exp(log_fn(x))`` over [lower, upper] by repeated grid doubling.

    Each doubling evaluates only the new midpoints and folds them into the running
    log trapezoid sum. Converged when successive levels differ by at most
    ``tol * max(1, |log I|)``, i.e. agree to about seven significant figures.
    """
    if not upper > lower:
        raise UsageError(f"empty integration interval [{lower}, {upper}]")
    n = initial_points
    grid = np.linspace(lower, upper, n)
    f = log_fn(grid)
    interior = _logsumexp(f[1:-1], 0) if n > 2 else -np.inf
    ends = np.logaddexp(f[0], f[-1]) - math.log(2.0)
    dx = (upper - lower) / (n - 1)
    total = np.logaddexp(ends, interior)  # log of sum of trapezoid weights / dx
    history = [float(total + math.log(dx))]
    while 2 * n - 1 <= max_points:
        mids = lower + dx * (np.arange(n - 1) + 0.5)
        total = np.logaddexp(total, _logsumexp(log_fn(mids), 0))
        dx /= 2.0
        n = 2 * n - 1
        history.append(float(total + math.log(dx)))
        prev, cur = history[-2], history[-1]
        if not np.isfinite(cur):
            break
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return QuadratureResult(cur, n, True, (lower, upper), history)
    return QuadratureResult(history[-1], n, False, (lower, upper), history)


def conditional_log_z(model, context, params, **kw):
    """Quadrature ``log Z`` of one conditional ``exp(-E(x; context))``.

    ``params`` is the conditional's proposal (batch shape ``()``); the interval is
    the union of ``location +- 20 scale`` over its components. A uniform-proposal
    model only has support on the proposal interval (importance samples never
    leave it), so that interval is integrated exactly.
    """
    lo, hi = prop.support(params, uniform_margin=0.0)
    context = np.asarray(context, dtype=np.float64).reshape(1, -1)

    def log_fn(points):
        out = np.empty(points.size)
        for start in range(0, points.size, MAX_POINTS):
            chunk = points[start:start + MAX_POINTS]
            tape = model.tape()
            out[start:start + chunk.size] = model.neg_energy(
                tape, tape.constant(chunk[None, :]), tape.constant(context), params).value[0]
        return out

    return integrate_log(log_fn, float(lo), float(hi), **kw)


@dataclass
class CalibrationReport:
    s_grid: list
    relative_errors: np.ndarray   # (len(s_grid), n_conditionals), signed
    absolute_errors: np.ndarray   # (len(s_grid), n_conditionals), signed log Z_hat - log Z
    log_z: np.ndarray             # quadrature values
    rows: np.ndarray
    dims: np.ndarray              # 0-based dimension index, always >= 1

    def summary(self):
        """Per-S ``(S, p5, median, p95, median |rel|, median |abs|)`` tuples."""
        out = []
        for s, rel, ab in zip(self.s_grid, self.relative_errors, self.absolute_errors):
            p5, med, p95 = np.percentile(rel, [5, 50, 95])
            out.append((s, p5, med, p95, float(np.median(np.abs(rel))), float(np.median(np.abs(ab)))))
        return out

    def to_csv(self):
        lines = ["S,p5,median,p95,median_abs_rel,median_abs_err"]
        for row in self.summary():
            lines.append(",".join([str(row[0])] + [repr(float(v)) for v in row[1:]]))
        return "\n".join(lines) + "\n"


def relative_error(log_z_hat, log_z, degenerate=1e-6):
    """``(log Z_hat - log Z) / |log Z|``; plain difference where ``|log Z| < degenerate``."""
    log_z_hat, log_z = np.broadcast_arrays(np.asarray(log_z_hat, float), np.asarray(log_z, float))
    diff = log_z_hat - log_z
    denom = np.abs(log_z)
    return np.where(denom < degenerate, diff, diff / np.where(denom < degenerate, 1.0, denom))


def calibrate(model, x_val, s_grid=(20, 200, 2000, 20000), rng=None, n_conditionals=1000,
              max_failures=0.01):
    """Compare importance-sampled ``log Z_hat`` with quadrature on random conditionals.

    Draws ``n_conditionals`` (row, dimension >= 2) pairs with replacement from
    ``x_val``; the first dimension is skipped because its conditional never
    changes. The same conditional set is used for every S.
    """
    if model.dim < 2:
        raise UsageError("calibration needs D >= 2")
    rng = np.random.default_rng(rng)
    x_val = model._check_input(x_val)
    rows = rng.integers(0, x_val.shape[0], n_conditionals)
    dims = rng.integers(1, model.dim, n_conditionals)
    params, gamma = model.evaluate_conditionals(x_val[rows])
    pick = np.arange(n_conditionals)
    cond = params[pick, dims]
    contexts = gamma[pick, dims]

    log_z = np.empty(n_conditionals)
    failures = 0
    for i in range(n_conditionals):
        res = conditional_log_z(model, contexts[i], cond[i])
        log_z[i] = res.log_integral
        failures += not res.converged
    if failures > max_failures * n_conditionals:
        raise EvaluationError(f"quadrature failed to converge on {failures} of {n_conditionals} conditionals")

    energy = _model_energy(model, contexts, cond)
    rel = np.empty((len(s_grid), n_conditionals))
    ab = np.empty_like(rel)
    for k, s in enumerate(s_grid):
        est = importance_log_z(energy, cond, int(s), rng)
        ab[k] = est - log_z
        rel[k] = relative_error(est, log_z)
    return CalibrationReport(list(s_grid), rel, ab, log_z, rows, dims)


def is_scaling_demo(dims, rng, trials=50, n_samples=20, target_sigma=1.0, proposal_sigma=1.25):
    """Importance-sampling ``log Z_hat`` for a normalised spherical Gaussian target.

    For each dimension count, runs ``trials`` independent estimates with
    ``n_samples`` draws from a wider spherical Gaussian proposal. The true value
    is 0. Returns ``{dim: array of trial estimates}``.
    """
    rng = np.random.default_rng(rng)
    out = {}
    for d in dims:
        if d < 1:
            raise UsageError(f"dimension must be positive, got {d}")
        x = proposal_sigma * rng.standard_normal((trials, n_samples, d))
        log_w = (-0.5 * np.sum(x * x, axis=-1) * (1.0 / target_sigma**2 - 1.0 / proposal_sigma**2)
                 + d * math.log(proposal_sigma / target_sigma))
        out[d] = _logsumexp(log_w, -1) - math.log(n_samples)
    return out
