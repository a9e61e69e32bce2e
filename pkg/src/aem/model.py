"""The autoregressive energy machine: estimation, training objective, sampling, KDE.

One ResMADE pass maps a batch ``x`` (N, D) to proposal parameters and context
vectors for every conditional. Each conditional's normalizer is estimated by
importance sampling from its proposal, always in the log domain::

    log Z_d ~= logsumexp_s(-E(x_s; ctx_d) - log q(x_s; phi_d)) - log S
    log p(x) ~= sum_d -E(x_d; ctx_d) - log Z_d
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import proposal as prop
from .autodiff import ParameterStore, Tape, _logsumexp
from .energy import EnergyNet, EnergyNetConfig
from .errors import ConfigurationError, EvaluationError, UsageError
from .resmade import ResMADE

# Upper bound on energy-net evaluations held in memory at once.
MAX_POINTS = 1 << 17


class AEM:
    """ResMADE + energy net sharing one parameter store.

    Pass ``rng`` (or ``seed``) to initialise fresh parameters; pass an existing
    ``store`` to wrap trained ones.
    """

    def __init__(self, config, store=None, rng=None, seed=None):
        config.validate()
        self.config = config
        if store is None:
            if rng is None:
                rng = np.random.default_rng(seed)
            store = ParameterStore()
        else:
            rng = None
        self.store = store
        gaussian = config.proposal == "gaussian"
        self.n_phi = 3 * config.mixture_comps if gaussian else 0
        self.arnn = ResMADE(store, config.dim, config.resmade_hidden_dim,
                            self.n_phi + config.context_dim, n_blocks=config.resmade_blocks,
                            dropout=config.resmade_dropout, rng=rng)
        self.enn = EnergyNet(store, EnergyNetConfig(
            context_dim=config.context_dim, hidden_dim=config.enn_hidden_dim,
            n_blocks=config.enn_blocks, activation=config.enn_activation,
            dropout=config.enn_dropout), rng=rng)

    @property
    def dim(self):
        return self.config.dim

    @property
    def gaussian(self):
        return self.n_phi > 0

    def tape(self, training=False, rng=None, grad=False):
        return Tape(self.store, training=training, rng=rng, grad=grad)

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ConfigurationError(f"expected data of shape (N, {self.dim}), got {x.shape}")
        return x

    def conditionals(self, tape, x):
        """Raw proposal parameters (N, D, 3K) or None, and contexts (N, D, C), as nodes."""
        out = self.arnn.forward(tape, tape.constant(x))
        gamma = tape.getitem(out, (Ellipsis, slice(self.n_phi, None)))
        if not self.gaussian:
            return None, gamma
        return tape.getitem(out, (Ellipsis, slice(0, self.n_phi))), gamma

    def proposal_params(self, phi, shape):
        """Constrained proposal values for raw ``phi`` (or the fixed uniform)."""
        if not self.gaussian:
            return prop.MixtureParams.uniform(self.config.uniform_lower,
                                              self.config.uniform_upper, shape)
        return prop.constrain(phi.value)

    def neg_energy(self, tape, points, context, proposal=None):
        """Negative energy of ``points`` (G, P) under ``context`` (G, C).

        ``proposal`` carries the matching proposal parameters; the network ignores
        it, but substitute energies in tests can use it.
        """
        return self.enn.forward(tape, points, context)

    def evaluate_conditionals(self, x, mode="eval", rng=None):
        """Proposal parameters (batch (N, D)) and contexts (N, D, C) as arrays."""
        x = self._check_input(x)
        tape = self.tape(training=(mode == "train"), rng=rng)
        phi, gamma = self.conditionals(tape, x)
        return self.proposal_params(phi, x.shape), gamma.value

    def proposal_log_prob(self, x):
        """``log q(x) = sum_d log q(x_d; phi_d)`` per row."""
        params, _ = self.evaluate_conditionals(x)
        return np.sum(prop.log_prob(params, x), axis=1)


@dataclass
class LogProbEstimate:
    log_p: np.ndarray   # (N,)
    log_q: np.ndarray   # (N,)
    log_z: np.ndarray   # (N, D)
    n_samples: int


def importance_log_z(neg_energy, params, n_samples, rng, max_points=MAX_POINTS):
    """Importance-sampling estimate of ``log Z`` for a flat batch of G conditionals.

    ``neg_energy(points, rows)`` returns the negative energy of ``points`` (g, m)
    for the conditionals ``rows`` (a slice of the batch). Large ``n_samples`` are
    processed in chunks and combined with a running log-sum-exp.
    """
    if n_samples < 1:
        raise UsageError(f"number of importance samples must be >= 1, got {n_samples}")
    (g_total,) = params.batch_shape
    out = np.empty(g_total)
    rows_per_chunk = max(1, max_points // n_samples)
    s_chunk = min(n_samples, max_points)
    for start in range(0, g_total, rows_per_chunk):
        rows = slice(start, min(g_total, start + rows_per_chunk))
        sub = params[rows]
        acc = np.full(sub.batch_shape, -np.inf)
        for s0 in range(0, n_samples, s_chunk):
            m = min(s_chunk, n_samples - s0)
            xs = prop.sample(sub, m, rng)
            lq = prop.log_prob(sub, xs)
            if not np.all(np.isfinite(lq)):
                raise EvaluationError("proposal sample outside its own support (non-finite log q)")
            acc = np.logaddexp(acc, _logsumexp(neg_energy(xs, rows) - lq, -1))
        out[rows] = acc - math.log(n_samples)
    return out


def _model_energy(model, contexts, params, mode="eval", rng=None):
    """``neg_energy(points, rows)`` closure over flattened contexts (G, C)."""

    def fn(points, rows):
        tape = model.tape(training=(mode == "train"), rng=rng)
        return model.neg_energy(tape, tape.constant(points), tape.constant(contexts[rows]),
                                params[rows]).value

    return fn


def _data_energy(model, x, contexts, params, mode="eval", rng=None):
    n, d = x.shape
    pts = x.reshape(n * d, 1)
    out = np.empty(n * d)
    for start in range(0, n * d, MAX_POINTS):
        rows = slice(start, min(n * d, start + MAX_POINTS))
        tape = model.tape(training=(mode == "train"), rng=rng)
        out[rows] = model.neg_energy(tape, tape.constant(pts[rows]), tape.constant(contexts[rows]),
                                     params[rows]).value[:, 0]
    return out.reshape(n, d)


def estimate_log_prob(model, x, n_samples, rng, mode="eval", batch_size=4096):
    """Approximate ``log p(x)`` per row with ``n_samples`` importance samples per conditional."""
    x = model._check_input(x)
    n, d = x.shape
    log_p, log_q, log_z = np.empty(n), np.empty(n), np.empty((n, d))
    for start in range(0, n, batch_size):
        rows = slice(start, min(n, start + batch_size))
        xb = x[rows]
        params, gamma = model.evaluate_conditionals(xb, mode=mode, rng=rng)
        log_q[rows] = np.sum(prop.log_prob(params, xb), axis=1)
        flat = params.reshape((xb.shape[0] * d,))
        contexts = gamma.reshape(xb.shape[0] * d, -1)
        energy = _model_energy(model, contexts, flat, mode, rng)
        lz = importance_log_z(energy, flat, n_samples, rng).reshape(xb.shape[0], d)
        ne = _data_energy(model, xb, contexts, flat, mode, rng)
        log_z[rows] = lz
        log_p[rows] = np.sum(ne - lz, axis=1)
    return LogProbEstimate(log_p=log_p, log_q=log_q, log_z=log_z, n_samples=n_samples)


@dataclass
class ObjectiveResult:
    loss: object          # scalar tape node
    tape: Tape
    log_p: np.ndarray     # per-row estimate (None during warm-up)
    log_q: np.ndarray


def draw_importance_samples(model, params, n_samples, rng):
    """Frozen ``(samples, log_q)`` arrays of shape (N, D, S) for :func:`training_objective`."""
    xs = prop.sample(params, n_samples, rng)
    return xs, prop.log_prob(params, xs)


def training_objective(model, x, n_samples, rng, warm_up=False, stop_gradient=True,
                       samples=None, include_log_q=True, training=True):
    """Negative mean of ``log p_hat(x) + log q(x)`` over the batch, recorded on a tape.

    During warm-up only ``-mean(log q)`` is used. Importance samples and their
    proposal densities enter ``log p_hat`` through stop-gradient nodes, so that
    term trains only the energy net and the context outputs. ``samples`` may
    pass pre-drawn ``(points, log_q)`` arrays, which are then plain constants.
    ``stop_gradient=False`` reparameterises the draws instead (for checks only).
    """
    x = model._check_input(x)
    n, d = x.shape
    tape = Tape(model.store, training=training, rng=rng)
    phi, gamma = model.conditionals(tape, x)
    xc = tape.constant(x)
    if model.gaussian:
        mix = prop.constrain_nodes(tape, phi)
        log_q = tape.sum(tape.reshape(prop.log_prob_nodes(tape, mix, tape.reshape(xc, (n, d, 1))),
                                      (n, d)), axis=1)
    else:
        width = model.config.uniform_upper - model.config.uniform_lower
        inside = np.all((x >= model.config.uniform_lower) & (x <= model.config.uniform_upper), 1)
        log_q = tape.constant(np.where(inside, -d * math.log(width), -np.inf))

    if warm_up:
        total = log_q
        log_p_value = None
    else:
        if samples is not None:
            xs, lqs = tape.constant(samples[0]), tape.constant(samples[1])
        elif model.gaussian:
            comp, eps = prop.draw_noise(mix.values(), n_samples, rng)
            xs = prop.sample_nodes(tape, mix, comp, eps)
            lqs = prop.log_prob_nodes(tape, mix, xs)
            if stop_gradient:
                xs, lqs = tape.stop_gradient(xs), tape.stop_gradient(lqs)
        else:
            params = model.proposal_params(None, (n, d))
            xs_v, lqs_v = draw_importance_samples(model, params, n_samples, rng)
            xs, lqs = tape.constant(xs_v), tape.constant(lqs_v)
        s = xs.value.shape[-1]
        points = tape.reshape(tape.concat([tape.reshape(xc, (n, d, 1)), xs], axis=-1),
                              (n * d, s + 1))
        ctx = tape.reshape(gamma, (n * d, gamma.value.shape[-1]))
        ne = model.neg_energy(tape, points, ctx)
        ne_x = tape.getitem(ne, (slice(None), 0))
        ne_s = tape.getitem(ne, (slice(None), slice(1, None)))
        log_z = tape.sub(tape.logsumexp(tape.sub(ne_s, tape.reshape(lqs, (n * d, s))), axis=-1),
                         tape.constant(math.log(s)))
        log_p = tape.sum(tape.reshape(tape.sub(ne_x, log_z), (n, d)), axis=1)
        log_p_value = log_p.value
        total = tape.add(log_p, log_q) if include_log_q else log_p

    loss = tape.neg(tape.mean(total))
    if not np.isfinite(loss.value):
        bad = np.flatnonzero(~np.isfinite(total.value))
        row = int(bad[0]) if bad.size else -1
        raise EvaluationError(f"non-finite training loss (first offending batch row {row})")
    return ObjectiveResult(loss=loss, tape=tape, log_p=log_p_value, log_q=log_q.value)


def sir_sample(model, n, rng, pool=100, batch_size=2048):
    """Sampling importance resampling, one dimension at a time.

    For each dimension ``pool`` candidates are drawn from the proposal conditional,
    weighted by ``exp(-E) / q`` and one is kept with probability proportional to
    its weight.
    """
    d = model.dim
    out = np.zeros((n, d))
    for start in range(0, n, batch_size):
        rows = slice(start, min(n, start + batch_size))
        x = out[rows]
        m = x.shape[0]
        for j in range(d):
            params, gamma = model.evaluate_conditionals(x)
            pj = params[:, j]
            cand = prop.sample(pj, pool, rng)
            logw = _model_energy(model, gamma[:, j], pj)(cand, slice(None)) - prop.log_prob(pj, cand)
            bad = ~np.any(np.isfinite(logw), axis=1)
            if bad.any():
                warnings.warn(f"{bad.sum()} SIR pools had no finite weight; resampling uniformly")
                logw[bad] = 0.0
            logw = np.where(np.isfinite(logw), logw, -np.inf)
            w = np.exp(logw - _logsumexp(logw, -1, keepdims=True))
            cdf = np.cumsum(w, axis=1)
            u = rng.random(m) * cdf[:, -1]
            idx = np.minimum(np.sum(u[:, None] >= cdf, axis=1), pool - 1)
            x[:, j] = cand[np.arange(m), idx]
        out[rows] = x
    return out


# -- KDE-normalised evaluation -------------------------------------------

@dataclass
class KdeConfig:
    bandwidth: float = 0.05
    proposal_weight: float = 0.1
    n_samples: int = 20000

    def validate(self):
        if not self.bandwidth > 0:
            raise ConfigurationError("KDE bandwidth must be positive")
        if not 0.0 <= self.proposal_weight <= 1.0:
            raise ConfigurationError("KDE proposal weight must lie in [0, 1]")
        return self


DEFAULT_BANDWIDTHS = np.logspace(-3, 0, 13)
DEFAULT_PROPOSAL_WEIGHTS = (0.005, 0.01, 0.05, 0.1, 0.25)


@dataclass
class KdeConditionals:
    """Per-conditional ingredients of the KDE density: samples and normalised log weights."""
    samples: np.ndarray        # (G, S)
    log_weights: np.ndarray    # (G, S), each row log-sums to 0
    params: object             # proposal MixtureParams, batch (G,)


def kde_conditionals(model, x, n_samples, rng, warn=True):
    """Draw proposal samples and self-normalised importance weights for every conditional of ``x``.

    Returns a :class:`KdeConditionals` over the flattened (N * D) conditionals.
    """
    x = model._check_input(x)
    n, d = x.shape
    params, gamma = model.evaluate_conditionals(x)
    flat = params.reshape((n * d,))
    contexts = gamma.reshape(n * d, -1)
    samples = prop.sample(flat, n_samples, rng)
    lq = prop.log_prob(flat, samples)
    energy = _model_energy(model, contexts, flat)
    logw = np.empty_like(samples)
    step = max(1, MAX_POINTS // n_samples)
    for start in range(0, n * d, step):
        rows = slice(start, min(n * d, start + step))
        logw[rows] = energy(samples[rows], rows) - lq[rows]
    logw -= _logsumexp(logw, -1, keepdims=True)
    if warn and np.any(logw.max(axis=1) > math.log(0.999)):
        warnings.warn("degenerate importance weights: one sample carries > 99.9% of the mass")
    return KdeConditionals(samples=samples, log_weights=logw, params=flat)


def kde_kernel_log_density(cond, points, bandwidth):
    """Log of the weighted Gaussian-kernel sum ``sum_s w_s N(x; x_s, h^2)`` at ``points`` (G, P)."""
    points = np.asarray(points, dtype=np.float64)
    h = bandwidth
    out = np.empty(points.shape)
    step = max(1, MAX_POINTS // (cond.samples.shape[1] * max(1, points.shape[1])))
    for start in range(0, points.shape[0], step):
        rows = slice(start, min(points.shape[0], start + step))
        z = (points[rows, :, None] - cond.samples[rows, None, :]) / h
        log_k = cond.log_weights[rows, None, :] - 0.5 * z * z - math.log(h) - prop.HALF_LOG_2PI
        out[rows] = _logsumexp(log_k, -1)
    return out


def _mix(log_kernel, log_q, proposal_weight):
    with np.errstate(divide="ignore"):
        a = math.log(proposal_weight) if proposal_weight > 0 else -np.inf
        b = math.log1p(-proposal_weight) if proposal_weight < 1 else -np.inf
    return np.logaddexp(b + log_kernel, a + log_q)


def kde_log_density(cond, points, bandwidth, proposal_weight):
    """Log KDE density of ``points`` (G, P) under each of the G conditionals.

    ``(1 - a) * sum_s w_s N(x; x_s, h^2) + a * q(x)``
    """
    log_q = prop.log_prob(cond.params, points)
    return _mix(kde_kernel_log_density(cond, points, bandwidth), log_q, proposal_weight)


def kde_log_prob(model, x, kde, rng):
    """Normalised log density of each row of ``x`` under the KDE surrogate."""
    kde.validate()
    x = model._check_input(x)
    n, d = x.shape
    out = np.zeros(n)
    rows_per = max(1, MAX_POINTS // (kde.n_samples * d))
    for start in range(0, n, rows_per):
        xb = x[start:start + rows_per]
        cond = kde_conditionals(model, xb, kde.n_samples, rng)
        ld = kde_log_density(cond, xb.reshape(-1, 1), kde.bandwidth, kde.proposal_weight)
        out[start:start + xb.shape[0]] = ld.reshape(xb.shape[0], d).sum(axis=1)
    return out


def tune_kde(model, x_val, rng, n_samples=20000, bandwidths=DEFAULT_BANDWIDTHS,
             proposal_weights=DEFAULT_PROPOSAL_WEIGHTS):
    """Grid search of (bandwidth, proposal weight) maximising mean validation log likelihood.

    The same proposal samples are reused for every grid point. Returns
    ``(KdeConfig, scores)`` where ``scores[i, j]`` is the mean log likelihood for
    ``bandwidths[i]`` and ``proposal_weights[j]``.
    """
    x_val = model._check_input(x_val)
    n, d = x_val.shape
    scores = np.zeros((len(bandwidths), len(proposal_weights)))
    rows_per = max(1, MAX_POINTS // (n_samples * d))
    for start in range(0, n, rows_per):
        xb = x_val[start:start + rows_per]
        cond = kde_conditionals(model, xb, n_samples, rng, warn=False)
        pts = xb.reshape(-1, 1)
        log_q = prop.log_prob(cond.params, pts)
        for i, h in enumerate(bandwidths):
            log_k = kde_kernel_log_density(cond, pts, h)
            for j, a in enumerate(proposal_weights):
                scores[i, j] += _mix(log_k, log_q, a).sum()
    scores /= n
    i, j = np.unravel_index(np.argmax(scores), scores.shape)
    return KdeConfig(float(bandwidths[i]), float(proposal_weights[j]), n_samples), scores
