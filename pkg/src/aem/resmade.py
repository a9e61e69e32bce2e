"""ResMADE: a masked autoregressive network with pre-activation residual blocks.

Every hidden layer shares one sequential degree vector, so a block's output can
be added to its input without breaking the autoregressive structure. Output
unit groups for dimension ``d`` only see hidden units of degree ``< d``, which
makes the dimension-1 outputs pure biases.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class DegreeAssignment:
    input_degrees: np.ndarray
    hidden_degrees: np.ndarray
    output_degrees: np.ndarray

    @property
    def dim(self):
        return len(self.input_degrees)


def assign_degrees(dim, hidden, slots_per_dim=1):
    """Sequential degrees ``(k - 1) mod (dim - 1) + 1`` for ``k = 1..hidden``.

    Output degrees repeat each dimension index ``slots_per_dim`` times, laid out
    dimension-major: ``[1]*slots, [2]*slots, ...``.
    """
    if dim < 2:
        raise ConfigurationError(
            f"ResMADE needs at least 2 dimensions, got {dim}; model 1-D data with a single "
            "unconditional energy"
        )
    if hidden < dim:
        warnings.warn(f"hidden width {hidden} < data dimension {dim}: input information is lost")
    k = np.arange(1, hidden + 1)
    return DegreeAssignment(
        input_degrees=np.arange(1, dim + 1),
        hidden_degrees=(k - 1) % (dim - 1) + 1,
        output_degrees=np.repeat(np.arange(1, dim + 1), slots_per_dim),
    )


def build_masks(assignment, n_blocks):
    """Input-projection mask, one hidden mask per block, and the output mask.

    Rows index destination units, columns source units. Hidden masks are the
    same array object repeated, since every hidden layer has the same degrees.
    """
    a = assignment
    proj = (a.hidden_degrees[:, None] >= a.input_degrees[None, :]).astype(np.float64)
    hidden = (a.hidden_degrees[:, None] >= a.hidden_degrees[None, :]).astype(np.float64)
    out = (a.output_degrees[:, None] > a.hidden_degrees[None, :]).astype(np.float64)
    return proj, [hidden] * n_blocks, out


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class ResMADE:
    """Maps a batch ``x`` of shape (N, D) to per-dimension output groups (N, D, slots).

    Parameters live in a shared :class:`~aem.autodiff.ParameterStore` under
    ``prefix``. Layer order: masked projection, ``n_blocks`` residual blocks of
    (relu, masked affine, relu, dropout, masked affine, add skip), relu, masked
    output affine.
    """

    def __init__(self, store, dim, hidden, slots_per_dim, n_blocks=4, dropout=0.0,
                 rng=None, prefix="arnn"):
        self.dim = dim
        self.hidden = hidden
        self.slots = slots_per_dim
        self.n_blocks = n_blocks
        self.dropout = dropout
        self.prefix = prefix
        self.degrees = assign_degrees(dim, hidden, slots_per_dim)
        self.proj_mask, self.block_masks, self.out_mask = build_masks(self.degrees, n_blocks)
        if rng is not None:
            self._init_params(store, rng)
        self.check_shapes(store)

    def _name(self, *parts):
        return ".".join((self.prefix,) + parts)

    def _init_params(self, store, rng):
        h, n_out = self.hidden, self.dim * self.slots
        store.add(self._name("proj", "W"), _glorot(rng, h, self.dim) * self.proj_mask)
        store.add(self._name("proj", "b"), np.zeros(h))
        for i, mask in enumerate(self.block_masks):
            for layer in ("1", "2"):
                store.add(self._name(f"block{i}", "W" + layer), _glorot(rng, h, h) * mask)
                store.add(self._name(f"block{i}", "b" + layer), np.zeros(h))
        store.add(self._name("out", "W"), _glorot(rng, n_out, h) * self.out_mask)
        store.add(self._name("out", "b"), np.zeros(n_out))

    def check_shapes(self, store):
        expected = {self._name("proj", "W"): self.proj_mask.shape,
                    self._name("out", "W"): self.out_mask.shape}
        for i in range(self.n_blocks):
            expected[self._name(f"block{i}", "W1")] = (self.hidden, self.hidden)
            expected[self._name(f"block{i}", "W2")] = (self.hidden, self.hidden)
        for name, shape in expected.items():
            if name not in store:
                raise ConfigurationError(f"missing parameter {name!r}")
            if store[name].shape != shape:
                raise ConfigurationError(
                    f"parameter {name!r} has shape {store[name].shape}, mask expects {shape}"
                )

    def forward(self, tape, x):
        """Returns a node of shape (N, D, slots)."""
        p = tape.param
        if x.value.ndim != 2 or x.value.shape[1] != self.dim:
            raise ConfigurationError(f"ResMADE expects (N, {self.dim}) input, got {x.value.shape}")
        h = tape.affine(x, p(self._name("proj", "W")), p(self._name("proj", "b")), self.proj_mask)
        for i, mask in enumerate(self.block_masks):
            blk = f"block{i}"
            t = tape.affine(tape.relu(h), p(self._name(blk, "W1")), p(self._name(blk, "b1")), mask)
            t = tape.dropout(tape.relu(t), self.dropout)
            t = tape.affine(t, p(self._name(blk, "W2")), p(self._name(blk, "b2")), mask)
            h = tape.add(h, t)
        out = tape.affine(tape.relu(h), p(self._name("out", "W")), p(self._name("out", "b")),
                          self.out_mask)
        return tape.reshape(out, (x.value.shape[0], self.dim, self.slots))
