"""Experiment configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. List values are comma separated;
bones are written ``a-b`` (e.g. ``bones = 0-1, 1-2``). Short aliases mirror
the usual notation: ``n`` (window), ``N`` (tokens), ``C`` (channels),
``V`` (nodes), ``L`` (layers), ``T`` (heads), ``F`` (feed-forward width).
"""

from __future__ import annotations

import hashlib
import json
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .gcae import GCAEConfig, TrainConfig
from .transformer import TransformerConfig

ALIASES = {
    "n": "window", "N": "num_tokens", "C": "channels", "V": "num_nodes",
    "L": "layers", "T": "heads", "F": "ff_dim",
}

PATH_KEYS = ("train_poses", "train_labels", "test_poses", "test_labels", "poselift_root")


@dataclass(frozen=True)
class ExperimentConfig:
    # data
    adapter: str = "csv"
    train_poses: str = ""
    train_labels: str = ""
    test_poses: str = ""
    test_labels: str = ""
    poselift_root: str = ""
    num_nodes: int = 18
    keypoints: tuple = ()
    bones: tuple = ()
    window: int = 12
    stride: int = 1
    normalize: bool = True
    # stage 1
    num_tokens: int = 2
    channels: int = 8
    hidden: tuple = (32, 64)
    kernel: int = 3
    num_relations: int = 3
    gcae_dropout: float = 0.1
    residual: bool = True
    downsample: str = "stride"
    gcae_epochs: int = 20
    gcae_batch_size: int = 8
    gcae_lr: float = 5e-5
    # stage 2
    layers: int = 2
    heads: int = 2
    ff_dim: int = 64
    tf_dropout: float = 0.1
    tf_epochs: int = 20
    tf_batch_size: int = 8
    tf_lr: float = 5e-5
    # optimizer
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # run
    seed: int = 0
    overlap: str = "mean"
    persons: str = "max"
    target_fpr: float = 0.10

    @property
    def token_width(self) -> int:
        return self.channels * self.num_nodes

    def gcae_config(self) -> GCAEConfig:
        return GCAEConfig(
            num_nodes=self.num_nodes, window=self.window, num_tokens=self.num_tokens,
            channels=self.channels, hidden=self.hidden, kernel=self.kernel,
            num_relations=self.num_relations, dropout=self.gcae_dropout,
            residual=self.residual, downsample=self.downsample,
            keypoints=self.keypoints or None, bones=self.bones or None,
        )

    def transformer_config(self) -> TransformerConfig:
        return TransformerConfig(d_model=self.token_width, layers=self.layers, heads=self.heads,
                                 ff_dim=self.ff_dim, dropout=self.tf_dropout)

    def gcae_train(self) -> TrainConfig:
        return TrainConfig(self.gcae_epochs, self.gcae_batch_size, self.gcae_lr,
                           self.beta1, self.beta2, self.adam_eps)

    def transformer_train(self) -> TrainConfig:
        return TrainConfig(self.tf_epochs, self.tf_batch_size, self.tf_lr,
                           self.beta1, self.beta2, self.adam_eps)

    def validate(self, check_files: bool = False) -> "ExperimentConfig":
        """Check model invariants; with ``check_files`` also that every referenced path exists."""
        if self.window % self.num_tokens:
            raise ConfigError(f"N does not divide n (N={self.num_tokens}, n={self.window})")
        if self.token_width % self.heads:
            raise ConfigError(f"T does not divide C*V (T={self.heads}, C*V={self.token_width})")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.adapter not in ("csv", "poselift"):
            raise ConfigError(f"adapter must be 'csv' or 'poselift', got {self.adapter!r}")
        for key in ("gcae_epochs", "tf_epochs", "gcae_batch_size", "tf_batch_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if not 0.0 < self.target_fpr < 1.0:
            raise ConfigError(f"target_fpr must lie in (0, 1), got {self.target_fpr}")
        for key in ("overlap", "persons"):
            if getattr(self, key) not in ("mean", "max"):
                raise ConfigError(f"{key} must be 'mean' or 'max'")
        self.gcae_config().validate()
        self.transformer_config().validate()
        if check_files:
            for key in self.required_paths():
                value = getattr(self, key)
                if not value:
                    raise ConfigError(f"{key} is not set")
                if not Path(value).exists():
                    raise ConfigError(f"{key} does not exist: {value}")
            if self.train_labels and not Path(self.train_labels).exists():
                raise ConfigError(f"train_labels does not exist: {self.train_labels}")
        return self

    def required_paths(self) -> tuple:
        if self.adapter == "poselift":
            return ("poselift_root",)
        return ("train_poses", "test_poses", "test_labels")

    def to_flat(self) -> dict:
        """Ordered ``key -> text`` mapping, the same text the file format uses."""
        return {f.name: format_value(getattr(self, f.name)) for f in fields(self)}

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_flat().items())

    def config_hash(self) -> str:
        blob = json.dumps(self.to_flat(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def with_overrides(self, pairs: dict) -> "ExperimentConfig":
        return replace(self, **parse_pairs(pairs))


def canonical_key(key: str) -> str:
    key = key.strip()
    key = ALIASES.get(key, key)
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{a}-{b}" for a, b in value)
        return ", ".join(str(v) for v in value)
    return str(value)


def parse_value(key: str, text: str):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            items = [t.strip() for t in text.split(",") if t.strip()]
            if key == "bones":
                return tuple(tuple(int(p) for p in item.split("-")) for item in items)
            return tuple(int(t) for t in items)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def parse_pairs(pairs: dict) -> dict:
    return {canonical_key(k): parse_value(canonical_key(k), str(v)) for k, v in pairs.items()}


def parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def read_pairs(path) -> dict:
    """Raw ``key -> text`` pairs from a config file, in file order."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    pairs = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = parse_assignment(line)
        pairs[key] = value
    return pairs


def load_config(path=None, overrides=(), **kwargs) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides, then keyword values.

    Relative data paths inside the file resolve against the file's directory.
    """
    cfg = ExperimentConfig()
    if path:
        pairs = read_pairs(path)
        base = Path(path).parent
        for key, value in list(pairs.items()):
            if canonical_key(key) in PATH_KEYS and value and not Path(value).is_absolute():
                pairs[key] = str(base / value)
        cfg = cfg.with_overrides(pairs)
    if overrides:
        cfg = cfg.with_overrides(dict(parse_assignment(o) for o in overrides))
    if kwargs:
        cfg = replace(cfg, **kwargs)
    return cfg


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(cfg.dumps())


_FIELD_TYPES = typing.get_type_hints(ExperimentConfig)
