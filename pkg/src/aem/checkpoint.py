"""Checkpoint persistence.

Layout: a UTF-8 text header of ``key = value`` lines terminated by a blank line,
followed by every parameter's values as little-endian float64, in header order.
Masks are not stored; they are rebuilt from the config on load.
"""

import json
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParameterStore
from .config import ModelConfig, TrainConfig, format_config, parse_config
from .errors import ParseError, UsageError
from .model import AEM

MAGIC = "AEM-CHECKPOINT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    params: OrderedDict
    best_metric: float = float("nan")
    step: int = 0
    rng_state: dict = field(default=None)

    @classmethod
    def from_model(cls, model, train_config, **kw):
        return cls(model.config, train_config, model.store.snapshot(), **kw)

    def to_model(self):
        store = ParameterStore()
        for name, value in self.params.items():
            store.add(name, value)
        return AEM(self.model_config, store=store)


def save(checkpoint, path):
    lines = [MAGIC, f"format_version = {FORMAT_VERSION}"]
    lines += format_config(checkpoint.model_config, checkpoint.train_config).splitlines()
    lines.append(f"best_metric = {checkpoint.best_metric!r}")
    lines.append(f"step = {checkpoint.step}")
    if checkpoint.rng_state is not None:
        lines.append(f"rng_state = {json.dumps(checkpoint.rng_state, sort_keys=True)}")
    for name, value in checkpoint.params.items():
        lines.append(f"param = {name} {','.join(map(str, value.shape))}")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n\n").encode())
        for value in checkpoint.params.values():
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    head, sep, body = blob.partition(b"\n\n")
    if not sep:
        raise ParseError(f"{path}: missing header terminator")
    lines = head.decode().splitlines()
    if not lines or lines[0] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    config_lines, shapes, meta = [], [], {}
    for lineno, line in enumerate(lines[1:], 2):
        key, _, value = (s.strip() for s in line.partition("="))
        if key == "param":
            name, _, dims = value.partition(" ")
            shapes.append((name, tuple(int(s) for s in dims.split(",") if s)))
        elif key in ("format_version", "best_metric", "step", "rng_state"):
            meta[key] = value
        else:
            config_lines.append(line)
    version = int(meta.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise UsageError(f"{path}: checkpoint format version {version}, expected {FORMAT_VERSION}")
    model_config, train_config = parse_config("\n".join(config_lines))
    values = np.frombuffer(body, dtype="<f8")
    expected = sum(int(np.prod(s)) for _, s in shapes)
    if values.size != expected:
        raise ParseError(f"{path}: expected {expected} parameter values, found {values.size}")
    params, offset = OrderedDict(), 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        params[name] = values[offset:offset + size].reshape(shape).astype(np.float64)
        offset += size
    rng_state = json.loads(meta["rng_state"]) if "rng_state" in meta else None
    return Checkpoint(model_config, train_config, params, float(meta.get("best_metric", "nan")),
                      int(meta.get("step", 0)), rng_state)
