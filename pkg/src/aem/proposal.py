"""Tractable proposal conditionals: Gaussian mixtures or a fixed uniform interval.

Raw ARNN outputs for one conditional are ``3K`` numbers: ``K`` mixture logits,
``K`` locations and ``K`` unconstrained scales. Scales are mapped through
``MIN_SCALE + softplus(raw)``.

Parameters may be batched: every array carries a leading batch shape ``B`` and
a trailing component axis. Points passed to :func:`log_prob` have shape
``B + (P,)`` (or exactly ``B``), and :func:`sample` returns ``B + (count,)``.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import _logsumexp
from .errors import EvaluationError, UsageError

MIN_SCALE = 1e-3
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class MixtureParams:
    kind: str = "gaussian-mixture"
    coefficients: Optional[np.ndarray] = None
    locations: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None
    lower: float = 0.0
    upper: float = 1.0
    shape: tuple = ()

    @classmethod
    def uniform(cls, lower, upper, shape=()):
        """Fixed U(lower, upper), replicated over a batch of the given shape."""
        if not lower < upper:
            raise UsageError(f"uniform proposal needs lower < upper, got [{lower}, {upper}]")
        return cls(kind="uniform", lower=float(lower), upper=float(upper), shape=tuple(shape))

    @property
    def batch_shape(self):
        if self.kind == "uniform":
            return self.shape
        return self.coefficients.shape[:-1]

    def __getitem__(self, index):
        """Select a sub-batch of conditionals."""
        if self.kind == "uniform":
            shape = np.empty(self.shape, dtype=bool)[index].shape
            return MixtureParams.uniform(self.lower, self.upper, shape)
        return MixtureParams(self.kind, self.coefficients[index], self.locations[index],
                             self.scales[index])

    def reshape(self, shape):
        if self.kind == "uniform":
            return MixtureParams.uniform(self.lower, self.upper, shape)
        k = self.coefficients.shape[-1]
        shape = tuple(shape) + (k,)
        return MixtureParams(self.kind, self.coefficients.reshape(shape),
                             self.locations.reshape(shape), self.scales.reshape(shape))


def constrain(raw):
    """Map raw ``(..., 3K)`` outputs to mixture parameters."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] % 3:
        raise UsageError(f"raw proposal parameters must have 3K entries, got {raw.shape[-1]}")
    bad = ~np.isfinite(raw)
    if bad.any():
        row = np.argwhere(bad)[0]
        raise EvaluationError(f"non-finite raw proposal parameters at batch index {tuple(int(i) for i in row[:-1])}")
    k = raw.shape[-1] // 3
    logits = raw[..., :k]
    log_coef = logits - _logsumexp(logits, -1, keepdims=True)
    return MixtureParams(
        coefficients=np.exp(log_coef),
        locations=raw[..., k:2 * k].copy(),
        scales=MIN_SCALE + np.logaddexp(0.0, raw[..., 2 * k:]),
    )


def _expand_points(params, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.shape == params.batch_shape
    if squeeze:
        x = x[..., None]
    return x, squeeze


def log_prob(params, x):
    if params.kind == "uniform":
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= params.lower) & (x <= params.upper)
        return np.where(inside, -math.log(params.upper - params.lower), -np.inf)
    x, squeeze = _expand_points(params, x)
    loc = params.locations[..., None, :]
    scale = params.scales[..., None, :]
    z = (x[..., None] - loc) / scale
    with np.errstate(divide="ignore"):
        log_coef = np.log(params.coefficients)[..., None, :]
    terms = log_coef - np.log(scale) - HALF_LOG_2PI - 0.5 * z * z
    out = _logsumexp(terms, -1)
    return out[..., 0] if squeeze else out


def draw_noise(params, count, rng):
    """Component indices and standard-normal draws behind :func:`sample`.

    Returns ``(components, eps)``, each of shape ``B + (count,)``. For the uniform
    kind ``components`` is None and ``eps`` holds U(0, 1) draws.
    """
    if count <= 0:
        raise UsageError(f"sample count must be positive, got {count}")
    shape = params.batch_shape + (count,)
    if params.kind == "uniform":
        return None, rng.random(shape)
    cdf = np.cumsum(params.coefficients, axis=-1)
    u = rng.random(shape)
    comp = np.sum(u[..., None] >= cdf[..., None, :], axis=-1)
    np.minimum(comp, cdf.shape[-1] - 1, out=comp)
    return comp, rng.standard_normal(shape)


def sample(params, count, rng):
    comp, eps = draw_noise(params, count, rng)
    if params.kind == "uniform":
        return params.lower + (params.upper - params.lower) * eps
    loc = np.take_along_axis(params.locations, comp, axis=-1)
    scale = np.take_along_axis(params.scales, comp, axis=-1)
    return loc + scale * eps


def support(params, width=20.0, uniform_margin=0.1):
    """Integration interval covering the proposal mass of every conditional in the batch.

    Gaussian mixtures: union of ``location +- width * scale`` over components.
    Uniform: the interval widened by ``uniform_margin`` of its length on each side.
    Returns ``(lower, upper)`` arrays of the batch shape.
    """
    if params.kind == "uniform":
        pad = uniform_margin * (params.upper - params.lower)
        return (np.full(params.shape, params.lower - pad),
                np.full(params.shape, params.upper + pad))
    lo = np.min(params.locations - width * params.scales, axis=-1)
    hi = np.max(params.locations + width * params.scales, axis=-1)
    return lo, hi


# -- tape versions --------------------------------------------------------

@dataclass
class MixtureNodes:
    """Constrained mixture parameters as tape nodes (log coefficients, locations, scales)."""
    log_coef: object
    loc: object
    scale: object

    def values(self):
        return MixtureParams(coefficients=np.exp(self.log_coef.value),
                             locations=self.loc.value, scales=self.scale.value)


def constrain_nodes(tape, raw):
    k = raw.value.shape[-1] // 3
    logits = tape.getitem(raw, (Ellipsis, slice(0, k)))
    loc = tape.getitem(raw, (Ellipsis, slice(k, 2 * k)))
    scale = tape.add(tape.softplus(tape.getitem(raw, (Ellipsis, slice(2 * k, 3 * k)))),
                     tape.constant(MIN_SCALE))
    return MixtureNodes(tape.log_softmax(logits), loc, scale)


def log_prob_nodes(tape, mix, x):
    """Mixture log density at points ``x`` of shape ``B + (P,)``; returns ``B + (P,)``."""
    batch = mix.loc.value.shape[:-1]
    k = mix.loc.value.shape[-1]
    xe = tape.reshape(x, x.value.shape + (1,))
    loc = tape.reshape(mix.loc, batch + (1, k))
    scale = tape.reshape(mix.scale, batch + (1, k))
    log_coef = tape.reshape(mix.log_coef, batch + (1, k))
    z = tape.div(tape.sub(xe, loc), scale)
    terms = tape.sub(tape.sub(log_coef, tape.log(scale)),
                     tape.mul(tape.square(z), tape.constant(0.5)))
    terms = tape.sub(terms, tape.constant(HALF_LOG_2PI))
    return tape.logsumexp(terms, axis=-1)


def sample_nodes(tape, mix, components, eps):
    """Reparameterised draws ``loc[c] + scale[c] * eps`` for given components and noise."""
    loc = tape.take_last(mix.loc, components)
    scale = tape.take_last(mix.scale, components)
    return tape.add(loc, tape.mul(scale, tape.constant(eps)))
