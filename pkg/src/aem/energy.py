"""Energy network: maps a scalar and a context vector to a non-positive log density.

The network input is the concatenation ``[x, context]``. Because the same
context is shared by every point evaluated for one conditional (the data point
and all its importance samples), the input projection is split as
``W[:, 0] * x + (W[:, 1:] @ context + b)`` and the context half is computed once
per conditional. The result equals an affine map of the concatenated input.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .resmade import _glorot


@dataclass
class EnergyNetConfig:
    context_dim: int = 64
    hidden_dim: int = 128
    n_blocks: int = 4
    activation: str = "relu"
    dropout: float = 0.0


class EnergyNet:
    def __init__(self, store, config, rng=None, prefix="enn"):
        if config.activation not in ("relu", "tanh"):
            raise ConfigurationError(f"unknown ENN activation {config.activation!r}")
        self.config = config
        self.prefix = prefix
        if rng is not None:
            self._init_params(store, rng)
        w = store[f"{prefix}.proj.W"]
        if w.shape != (config.hidden_dim, 1 + config.context_dim):
            raise ConfigurationError(
                f"ENN projection has shape {w.shape}, config expects "
                f"{(config.hidden_dim, 1 + config.context_dim)}"
            )

    def _init_params(self, store, rng):
        c, h = self.config.context_dim, self.config.hidden_dim
        store.add(f"{self.prefix}.proj.W", _glorot(rng, h, 1 + c))
        store.add(f"{self.prefix}.proj.b", np.zeros(h))
        for i in range(self.config.n_blocks):
            for layer in ("1", "2"):
                store.add(f"{self.prefix}.block{i}.W{layer}", _glorot(rng, h, h))
                store.add(f"{self.prefix}.block{i}.b{layer}", np.zeros(h))
        store.add(f"{self.prefix}.out.W", _glorot(rng, 1, h))
        store.add(f"{self.prefix}.out.b", np.zeros(1))

    def _act(self, tape, x):
        return tape.relu(x) if self.config.activation == "relu" else tape.tanh(x)

    def forward(self, tape, x, context):
        """Negative energy for points ``x`` (G, P) under contexts (G, C); returns (G, P)."""
        g, p = x.value.shape
        cfg = self.config
        if context.value.shape != (g, cfg.context_dim):
            raise ConfigurationError(
                f"ENN: points {x.value.shape} need context of shape {(g, cfg.context_dim)}, "
                f"got {context.value.shape}"
            )
        par = lambda name: tape.param(f"{self.prefix}.{name}")
        w = par("proj.W")
        w_x = tape.reshape(tape.getitem(w, (slice(None), 0)), (1, 1, cfg.hidden_dim))
        w_ctx = tape.getitem(w, (slice(None), slice(1, None)))
        ctx = tape.affine(context, w_ctx, par("proj.b"))
        h = tape.add(tape.mul(tape.reshape(x, (g, p, 1)), w_x),
                     tape.reshape(ctx, (g, 1, cfg.hidden_dim)))
        h = tape.reshape(h, (g * p, cfg.hidden_dim))
        for i in range(cfg.n_blocks):
            t = tape.affine(self._act(tape, h), par(f"block{i}.W1"), par(f"block{i}.b1"))
            t = tape.dropout(self._act(tape, t), cfg.dropout)
            t = tape.affine(t, par(f"block{i}.W2"), par(f"block{i}.b2"))
            h = tape.add(h, t)
        out = tape.affine(self._act(tape, h), par("out.W"), par("out.b"))
        return tape.reshape(tape.neg(tape.softplus(out)), (g, p))
