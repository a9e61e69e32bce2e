"""Reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every operation applied to :class:`Node` objects during a
forward pass and replays them backwards to accumulate gradients into a
:class:`ParameterStore`. Only the handful of operations the energy machine needs
is provided. Nodes whose value does not depend on any trainable quantity are
flagged constant and are skipped by the backward pass; :meth:`Tape.stop_gradient`
produces such a node explicitly.

Example
-------
>>> store = ParameterStore()
>>> store.add("w", np.array([[2.0]]))
>>> tape = Tape(store)
>>> y = tape.sum(tape.affine(tape.constant(np.array([[3.0]])), tape.param("w")))
>>> tape.backward(y)
>>> store.grad("w")
array([[3.]])
"""

import math
import warnings
from collections import OrderedDict

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, EvaluationError, UsageError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class _Entry:
    __slots__ = ("value", "grad", "m", "v")

    def __init__(self, value):
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)


class ParameterStore:
    """Ordered collection of named float64 arrays with gradient and Adam buffers."""

    def __init__(self):
        self._entries = OrderedDict()
        self.step = 0

    def add(self, name, value):
        if name in self._entries:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        self._entries[name] = _Entry(value)
        return value

    def __contains__(self, name):
        return name in self._entries

    def __getitem__(self, name):
        return self._entries[name].value

    def __setitem__(self, name, value):
        entry = self._entries[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != entry.value.shape:
            raise ConfigurationError(
                f"parameter {name!r}: expected shape {entry.value.shape}, got {value.shape}"
            )
        entry.value[...] = value

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return [(name, e.value) for name, e in self._entries.items()]

    def grad(self, name):
        return self._entries[name].grad

    def zero_grad(self):
        for e in self._entries.values():
            e.grad.fill(0.0)

    def size(self):
        return sum(e.value.size for e in self._entries.values())

    def snapshot(self):
        """Copy of all parameter values, in store order."""
        return OrderedDict((name, e.value.copy()) for name, e in self._entries.items())

    def restore(self, values):
        for name, value in values.items():
            self[name] = value

    def flat(self):
        return np.concatenate([e.value.ravel() for e in self._entries.values()])

    def flat_grad(self):
        return np.concatenate([e.grad.ravel() for e in self._entries.values()])


def adam_step(store, learning_rate):
    """Apply one Adam update using the gradients currently held in ``store``.

    Gradients are cleared afterwards. If any gradient is non-finite the step is
    aborted before touching any parameter and :class:`EvaluationError` names the
    offending parameter.
    """
    for name, e in store._entries.items():
        if not np.all(np.isfinite(e.grad)):
            raise EvaluationError(f"non-finite gradient for parameter {name!r}")
    store.step += 1
    t = store.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for e in store._entries.values():
        e.m *= ADAM_BETA1
        e.m += (1.0 - ADAM_BETA1) * e.grad
        e.v *= ADAM_BETA2
        e.v += (1.0 - ADAM_BETA2) * np.square(e.grad)
        e.value -= learning_rate * (e.m / c1) / (np.sqrt(e.v / c2) + ADAM_EPS)
        e.grad.fill(0.0)
    return store


def cosine_lr(step, total_steps, initial_lr):
    """Cosine annealing from ``initial_lr`` at step 0 down to zero at ``total_steps``."""
    if step > total_steps:
        warnings.warn(f"step {step} beyond total_steps {total_steps}; learning rate clamped to 0")
        return 0.0
    if step < 0:
        raise UsageError(f"negative step {step}")
    return initial_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


class Node:
    """A value recorded on a tape."""

    __slots__ = ("value", "parents", "vjp", "constant", "op", "index", "param")

    def __init__(self, value, parents, vjp, constant, op, index, param=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.constant = constant
        self.op = op
        self.index = index
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        flag = ", constant" if self.constant else ""
        return f"Node({self.op}, shape={self.value.shape}{flag})"


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _logsumexp(x, axis, keepdims=False):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if not keepdims:
        out = np.squeeze(out, axis=axis)
    return out


class Tape:
    """Records operations for one forward pass and replays them in reverse.

    ``training`` switches dropout on; ``rng`` (a ``numpy.random.Generator``)
    supplies the dropout masks. A tape is single use: build it, run forward,
    call :meth:`backward` once. With ``grad=False`` nothing is recorded, so
    intermediate activations are freed as soon as they are consumed.
    """

    def __init__(self, store=None, training=False, rng=None, grad=True):
        self.store = store
        self.training = training
        self.rng = rng
        self.grad_enabled = grad
        self.nodes = []
        self._params = {}
        self._grads = None

    # -- leaves ---------------------------------------------------------
    def _record(self, op, value, parents=(), vjp=None, constant=None):
        if not self.grad_enabled:
            return Node(value, (), None, True, op, -1)
        if constant is None:
            constant = all(p.constant for p in parents)
        node = Node(value, tuple(parents), vjp, constant, op, len(self.nodes))
        self.nodes.append(node)
        return node

    def param(self, name):
        """Leaf node bound to a store entry; its gradient lands in the store."""
        node = self._params.get(name)
        if node is None:
            if self.store is None or name not in self.store:
                raise ConfigurationError(f"unknown parameter {name!r}")
            node = self._record("param", self.store[name], constant=False)
            if self.grad_enabled:
                node.param = name
            self._params[name] = node
        return node

    def constant(self, value):
        return self._record("constant", np.asarray(value, dtype=np.float64), constant=True)

    def variable(self, value):
        """Differentiable leaf not held in the store (inspect with :meth:`grad`)."""
        return self._record("variable", np.array(value, dtype=np.float64), constant=False)

    def stop_gradient(self, x):
        return self._record("stop_gradient", x.value, (x,), constant=True)

    # -- linear ----------------------------------------------------------
    def affine(self, x, weight, bias=None, mask=None):
        """``x @ (weight * mask).T + bias`` for a batch ``x`` of shape (N, in)."""
        xv, wv = x.value, weight.value
        if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[1]:
            raise ConfigurationError(
                f"affine: input shape {xv.shape} incompatible with weight shape {wv.shape}"
            )
        if mask is not None and mask.shape != wv.shape:
            raise ConfigurationError(
                f"affine: mask shape {mask.shape} does not match weight shape {wv.shape}"
            )
        if bias is not None and bias.value.shape != (wv.shape[0],):
            raise ConfigurationError(
                f"affine: bias shape {bias.value.shape} does not match output width {wv.shape[0]}"
            )
        w_eff = wv * mask if mask is not None else wv
        y = xv @ w_eff.T
        if bias is not None:
            y += bias.value
        parents = (x, weight) if bias is None else (x, weight, bias)

        def vjp(g):
            gx = None if x.constant else g @ w_eff
            gw = None
            if not weight.constant:
                gw = g.T @ xv
                if mask is not None:
                    gw *= mask
            if bias is None:
                return gx, gw
            return gx, gw, np.ones(g.shape[0]) @ g

        return self._record("masked_affine" if mask is not None else "affine", y, parents, vjp)

    # -- elementwise -----------------------------------------------------
    def relu(self, x):
        y = np.maximum(x.value, 0.0)
        return self._record("relu", y, (x,), lambda g: (g * (y > 0),))

    def tanh(self, x):
        y = np.tanh(x.value)
        return self._record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))

    def softplus(self, x):
        xv = x.value
        return self._record("softplus", np.logaddexp(0.0, xv), (x,), lambda g: (g * expit(xv),))

    def neg(self, x):
        return self._record("neg", -x.value, (x,), lambda g: (-g,))

    def exp(self, x):
        y = np.exp(x.value)
        return self._record("exp", y, (x,), lambda g: (g * y,))

    def log(self, x):
        xv = x.value
        return self._record("log", np.log(xv), (x,), lambda g: (g / xv,))

    def square(self, x):
        xv = x.value
        return self._record("square", xv * xv, (x,), lambda g: (2.0 * g * xv,))

    def add(self, a, b):
        sa, sb = a.value.shape, b.value.shape
        return self._record(
            "add", a.value + b.value, (a, b),
            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        )

    def sub(self, a, b):
        sa, sb = a.value.shape, b.value.shape
        return self._record(
            "sub", a.value - b.value, (a, b),
            lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        )

    def mul(self, a, b):
        av, bv = a.value, b.value

        def vjp(g):
            ga = None if a.constant else _unbroadcast(g * bv, av.shape)
            gb = None if b.constant else _unbroadcast(g * av, bv.shape)
            return ga, gb

        return self._record("mul", av * bv, (a, b), vjp)

    def div(self, a, b):
        av, bv = a.value, b.value
        y = av / bv

        def vjp(g):
            ga = None if a.constant else _unbroadcast(g / bv, av.shape)
            gb = None if b.constant else _unbroadcast(-g * y / bv, bv.shape)
            return ga, gb

        return self._record("div", y, (a, b), vjp)

    def dropout(self, x, rate):
        """Inverted dropout; the exact identity outside training or when ``rate`` is 0."""
        if not self.training or rate == 0.0:
            return x
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout: rate {rate} outside [0, 1)")
        if self.rng is None:
            raise UsageError("dropout in training mode needs a tape rng")
        scale = (self.rng.random(x.value.shape) >= rate) / (1.0 - rate)
        return self._record("dropout", x.value * scale, (x,), lambda g: (g * scale,))

    # -- structural ------------------------------------------------------
    def concat(self, nodes, axis=-1):
        values = [n.value for n in nodes]
        try:
            y = np.concatenate(values, axis=axis)
        except ValueError as exc:
            shapes = [v.shape for v in values]
            raise ConfigurationError(f"concat: incompatible shapes {shapes}") from exc
        bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
        return self._record("concat", y, nodes, lambda g: tuple(np.split(g, bounds, axis=axis)))

    def reshape(self, x, shape):
        old = x.value.shape
        try:
            y = x.value.reshape(shape)
        except ValueError as exc:
            raise ConfigurationError(f"reshape: cannot reshape {old} to {shape}") from exc
        return self._record("reshape", y, (x,), lambda g: (g.reshape(old),))

    def getitem(self, x, index):
        """Basic (slice) indexing."""
        shape = x.value.shape

        def vjp(g):
            out = np.zeros(shape)
            out[index] = g
            return (out,)

        return self._record("getitem", x.value[index], (x,), vjp)

    def take_last(self, x, indices):
        """Gather along the last axis; repeated indices accumulate in the backward pass."""
        xv = x.value
        k = xv.shape[-1]

        def vjp(g):
            rows = np.arange(xv.size // k).reshape(xv.shape[:-1] + (1,))
            flat = (rows * k + indices).ravel()
            out = np.bincount(flat, weights=np.broadcast_to(g, indices.shape).ravel(),
                              minlength=xv.size)
            return (out.reshape(xv.shape),)

        return self._record("take", np.take_along_axis(xv, indices, axis=-1), (x,), vjp)

    def sum(self, x, axis=None):
        shape = x.value.shape

        def vjp(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return self._record("sum", np.sum(x.value, axis=axis), (x,), vjp)

    def mean(self, x, axis=None):
        n = x.value.size if axis is None else x.value.shape[axis]
        return self.mul(self.sum(x, axis), self.constant(1.0 / n))

    # -- reductions in log space ------------------------------------------
    def logsumexp(self, x, axis=-1):
        xv = x.value
        y = _logsumexp(xv, axis, keepdims=True)

        def vjp(g):
            return (np.expand_dims(g, axis) * np.exp(xv - y),)

        return self._record("logsumexp", np.squeeze(y, axis=axis), (x,), vjp)

    def log_softmax(self, x, axis=-1):
        xv = x.value
        y = xv - _logsumexp(xv, axis, keepdims=True)

        def vjp(g):
            return (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),)

        return self._record("log_softmax", y, (x,), vjp)

    # -- backward --------------------------------------------------------
    def backward(self, output, cotangent=None):
        """Propagate ``cotangent`` (default 1 for a scalar) from ``output``.

        Parameter gradients are added to the store's accumulators; gradients of
        :meth:`variable` leaves are available through :meth:`grad`.
        """
        if (not self.grad_enabled or not self.nodes or output.index < 0
                or output.index >= len(self.nodes) or self.nodes[output.index] is not output):
            raise UsageError("backward called before a forward pass on this tape")
        if cotangent is None:
            if output.value.size != 1:
                raise UsageError("backward on a non-scalar output needs a cotangent")
            cotangent = np.ones_like(output.value)
        cotangent = np.asarray(cotangent, dtype=np.float64)
        if cotangent.shape != output.value.shape:
            raise ConfigurationError(
                f"backward: cotangent shape {cotangent.shape} != output shape {output.value.shape}"
            )
        grads = {output.index: cotangent}
        for node in reversed(self.nodes[: output.index + 1]):
            g = grads.pop(node.index, None)
            if g is None or node.constant:
                continue
            if node.param is not None:
                self.store.grad(node.param)[...] += g
                continue
            if node.vjp is None:
                grads[node.index] = g  # variable leaf: keep for grad()
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or parent.constant:
                    continue
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + pg
                else:
                    grads[parent.index] = pg
        self._grads = grads

    def grad(self, node):
        if self._grads is None:
            raise UsageError("grad requested before backward")
        g = self._grads.get(node.index)
        return np.zeros_like(node.value) if g is None else np.asarray(g)
