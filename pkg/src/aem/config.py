"""Model and training hyperparameters, presets, and the flat ``key = value`` file format."""

import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigurationError, ParseError


@dataclass
class ModelConfig:
    dim: int = 2
    resmade_hidden_dim: int = 256
    resmade_blocks: int = 4
    resmade_activation: str = "relu"
    resmade_dropout: float = 0.0
    context_dim: int = 64
    enn_hidden_dim: int = 128
    enn_blocks: int = 4
    enn_activation: str = "relu"
    enn_dropout: float = 0.0
    proposal: str = "gaussian"
    mixture_comps: int = 10
    uniform_lower: float = 0.0
    uniform_upper: float = 1.0

    def validate(self):
        if self.dim < 2:
            raise ConfigurationError(f"dim must be >= 2, got {self.dim}")
        if self.proposal not in ("gaussian", "uniform"):
            raise ConfigurationError(f"proposal must be 'gaussian' or 'uniform', got {self.proposal!r}")
        if self.resmade_activation != "relu":
            raise ConfigurationError("the ResMADE only supports relu")
        if self.enn_activation not in ("relu", "tanh"):
            raise ConfigurationError(f"enn_activation must be relu or tanh, got {self.enn_activation!r}")
        if self.proposal == "uniform" and not self.uniform_lower < self.uniform_upper:
            raise ConfigurationError("uniform_lower must be < uniform_upper")
        for name in ("resmade_dropout", "enn_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1)")
        return self


@dataclass
class TrainConfig:
    batch_size: int = 256
    total_steps: int = 400000
    warm_up_steps: int = 0
    learning_rate: float = 5e-4
    n_importance_samples: int = 20
    seed: int = 0
    val_interval: int = 1000
    val_rows: int = 5000
    early_stopping_patience: int = 0

    def validate(self):
        if self.warm_up_steps > self.total_steps:
            raise ConfigurationError("warm_up_steps exceeds total_steps")
        if self.n_importance_samples < 1:
            raise ConfigurationError("n_importance_samples must be >= 1")
        if self.batch_size < 1 or self.total_steps < 1 or self.val_interval < 1:
            raise ConfigurationError("batch_size, total_steps and val_interval must be positive")
        return self


# Appendix-style settings. Tabular presets leave ``dim`` to be filled from the data.
PRESETS = {
    "spirals": (dict(resmade_hidden_dim=256, mixture_comps=10),
                dict(batch_size=256, total_steps=400000, warm_up_steps=5000)),
    "checkerboard": (dict(resmade_hidden_dim=256, proposal="uniform",
                          uniform_lower=-2.0, uniform_upper=2.0),
                     dict(batch_size=256, total_steps=400000, warm_up_steps=0)),
    "diamond": (dict(resmade_hidden_dim=256, mixture_comps=10),
                dict(batch_size=256, total_steps=400000, warm_up_steps=0)),
    "einstein": (dict(resmade_hidden_dim=256, mixture_comps=10),
                 dict(batch_size=256, total_steps=3000000, warm_up_steps=0)),
    "power": (dict(resmade_hidden_dim=512, resmade_dropout=0.1, enn_dropout=0.1, mixture_comps=20),
              dict(batch_size=512, total_steps=800000, warm_up_steps=5000)),
    "gas": (dict(resmade_hidden_dim=512, enn_activation="tanh", mixture_comps=20),
            dict(batch_size=512, total_steps=400000, warm_up_steps=5000)),
    "hepmass": (dict(resmade_hidden_dim=512, resmade_dropout=0.2, enn_dropout=0.2, mixture_comps=20),
                dict(batch_size=512, total_steps=400000, warm_up_steps=5000)),
    "miniboone": (dict(resmade_hidden_dim=512, resmade_dropout=0.5, enn_dropout=0.5,
                       mixture_comps=20),
                  dict(batch_size=512, total_steps=6000, warm_up_steps=0)),
    "bsds300": (dict(resmade_hidden_dim=1024, resmade_dropout=0.2, enn_dropout=0.2,
                     mixture_comps=20),
                dict(batch_size=512, total_steps=400000, warm_up_steps=5000)),
}


def preset(name, **overrides):
    """``(ModelConfig, TrainConfig)`` for a named task, with keyword overrides."""
    try:
        model_kw, train_kw = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    model_kw, train_kw = dict(model_kw), dict(train_kw)
    model_names = {f.name for f in fields(ModelConfig)}
    for key, value in overrides.items():
        (model_kw if key in model_names else train_kw)[key] = value
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def _convert(f, text, lineno):
    kind = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str}[f.type]
    try:
        return kind(text)
    except ValueError:
        raise ParseError(f"{f.name}: cannot parse {text!r} as {kind.__name__}", lineno) from None


def parse_config(text, model=None, train=None):
    """Parse ``key = value`` lines into ``(ModelConfig, TrainConfig)``.

    Starts from ``model``/``train`` (defaults if omitted); a ``preset = name``
    line, if present, must come first and selects the starting point instead.
    """
    model = dataclasses.replace(model) if model is not None else ModelConfig()
    train = dataclasses.replace(train) if train is not None else TrainConfig()
    model_fields = {f.name: f for f in fields(ModelConfig)}
    train_fields = {f.name: f for f in fields(TrainConfig)}
    seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            if seen:
                raise ParseError("preset must be the first setting", lineno)
            model, train = preset(value)
        elif key in model_fields:
            setattr(model, key, _convert(model_fields[key], value, lineno))
        elif key in train_fields:
            setattr(train, key, _convert(train_fields[key], value, lineno))
        else:
            raise ParseError(f"unknown setting {key!r}", lineno)
        seen = True
    return model, train


def format_config(model, train):
    lines = [f"{f.name} = {getattr(model, f.name)!s}" for f in fields(model)]
    lines += [f"{f.name} = {getattr(train, f.name)!s}" for f in fields(train)]
    return "\n".join(lines) + "\n"


def load_config(path, model=None, train=None):
    with open(path) as fh:
        return parse_config(fh.read(), model, train)
