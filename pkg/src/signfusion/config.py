"""Run configuration: the hyperparameter record and its file format.

Config files are line-oriented ``key = value`` pairs whose keys mirror the
:class:`ModelConfig` fields; unknown keys are rejected so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError


@dataclass
class ModelConfig:
    """Defaults reproduce the shipped training setup and best ablation rows."""

    batch_size: int = 32
    epochs: int = 250
    encoder_layers: int = 6
    decoder_layers: int = 3
    heads: int = 4
    learning_rate: float = 1e-3
    ffn_dim: int = 1024
    embed_dim: int = 256
    scheduler: str = "cosine"
    stgcn_layers: int = 3
    lstm_layers: int = 1
    fusion: str = "summation"
    label_smoothing: float = 0.1
    beam_size: int = 5
    validate_every: int = 2
    seed: int = 0
    vocab_size: int = 1000
    feature_dim: int = 64
    clip_window: int = 16
    clip_stride: int = 8
    dropout: float = 0.1
    max_decode_len: int = 64
    max_grad_norm: float = 0.0
    keypoint_positions: bool = False
    smoothing_literal_form: bool = False
    beam_length_norm: bool = True

    def validate(self) -> "ModelConfig":
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} must be divisible by "
                f"heads {self.heads}"
            )
        if self.embed_dim % 2 != 0:
            raise ConfigError(f"embed_dim must be even, got {self.embed_dim}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(
                f"label_smoothing must lie in [0, 1), got {self.label_smoothing}"
            )
        if self.fusion not in ("summation", "linear", "lstm"):
            raise ConfigError(f"unknown fusion strategy {self.fusion!r}")
        if self.scheduler not in ("cosine", "constant"):
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        for name in ("batch_size", "epochs", "encoder_layers", "decoder_layers",
                     "heads", "ffn_dim", "embed_dim", "stgcn_layers",
                     "lstm_layers", "beam_size", "vocab_size", "feature_dim",
                     "clip_window", "clip_stride", "max_decode_len"):
            if getattr(self, name) < 1 and name not in ("encoder_layers",):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.encoder_layers < 0:
            raise ConfigError(
                f"encoder_layers must be nonnegative, got {self.encoder_layers}"
            )
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}


def _convert(field: dataclasses.Field, raw: str, source: str, line: int):
    text = raw.strip()
    try:
        if field.type in ("int", int):
            return int(text)
        if field.type in ("float", float):
            return float(text)
        if field.type in ("bool", bool):
            lowered = text.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigError(
            f"{source}:{line}: cannot parse {text!r} as {field.type} "
            f"for key {field.name!r}"
        ) from None


def parse_config(text: str, source: str = "<string>") -> ModelConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        values[key] = _convert(_FIELDS[key], value, source, lineno)
    return ModelConfig(**values).validate()


def load_config(path) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def serialize_config(config: ModelConfig) -> str:
    lines = [
        f"{f.name} = {getattr(config, f.name)}"
        for f in dataclasses.fields(ModelConfig)
    ]
    return "\n".join(lines) + "\n"
