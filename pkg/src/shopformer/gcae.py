"""Graph-convolutional autoencoder built from spatio-temporal graph blocks.

The encoder maps a normalized pose window ``(2, n, V)`` to ``(C, N, V)``;
each of the N retained time steps, flattened to ``C * V`` values, is one
token. The decoder mirrors the encoder and restores ``(2, n, V)``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numkit as nk
from .errors import ConfigError, ShapeError
from .graph import RelationStack
from .numkit import Module, Tensor
from .numkit.checkpoint import ModelCheckpoint

log = logging.getLogger(__name__)

RELU_GAIN = float(np.sqrt(2.0))


@dataclass
class GCAEConfig:
    num_nodes: int = 18
    window: int = 12
    num_tokens: int = 2
    channels: int = 8
    hidden: tuple = (32, 64)
    kernel: int = 3
    num_relations: int = 3
    dropout: float = 0.1
    residual: bool = True
    downsample: str = "stride"  # or "pool"
    keypoints: tuple | None = None  # keypoint subset used as nodes
    bones: tuple | None = None      # custom edge list over those nodes

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.keypoints is not None:
            self.keypoints = tuple(int(k) for k in self.keypoints)
        if self.bones is not None:
            self.bones = tuple((int(a), int(b)) for a, b in self.bones)

    @property
    def factor(self) -> int:
        return self.window // self.num_tokens

    @property
    def token_width(self) -> int:
        return self.channels * self.num_nodes

    def validate(self):
        if self.bones is None and self.num_nodes not in (17, 18):
            raise ConfigError(f"num_nodes must be 17 or 18 without a custom bone list, got {self.num_nodes}")
        if self.num_nodes not in (17, 18) and self.keypoints is None:
            raise ConfigError(f"num_nodes={self.num_nodes} needs an explicit keypoint subset")
        if self.keypoints is not None and len(self.keypoints) != self.num_nodes:
            raise ConfigError(f"{len(self.keypoints)} keypoints listed for num_nodes={self.num_nodes}")
        if self.window < 1 or self.num_tokens < 1:
            raise ConfigError("window and num_tokens must be positive")
        if self.window % self.num_tokens:
            raise ConfigError(f"N does not divide n (N={self.num_tokens}, n={self.window})")
        if self.channels < 1 or any(h < 1 for h in self.hidden):
            raise ConfigError("channel counts must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"temporal kernel must be odd, got {self.kernel}")
        if self.downsample not in ("stride", "pool"):
            raise ConfigError(f"downsample must be 'stride' or 'pool', got {self.downsample!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        return self


def strided_kernel(kernel: int, stride: int) -> int:
    """Smallest odd kernel >= ``kernel`` whose taps tile a stride-``stride`` step."""
    return max(kernel, 2 * (stride // 2) + 1)


class STGCNBlock(Module):
    """Graph convolution over joints, temporal convolution over frames, residual, ReLU, dropout."""

    def __init__(self, cin: int, cout: int, num_nodes: int, rng: np.random.Generator,
                 stride: int = 1, kernel: int = 3, num_relations: int = 3,
                 dropout: float = 0.0, residual: bool = True, activation: bool = True,
                 bones=None):
        self.cin, self.cout, self.stride = cin, cout, stride
        self.kernel = strided_kernel(kernel, stride)
        self.dropout, self.activation = dropout, activation
        self.relations = RelationStack(num_nodes, cin, num_relations, rng, bones=bones)
        fan = cin * num_relations
        gain = RELU_GAIN if activation else 1.0
        self.spatial = [nk.param((cout, cin), rng, fan) for _ in range(num_relations)]
        self.spatial_b = nk.module.zeros((cout,))
        self.temporal_w = nk.param((cout, cout, self.kernel), rng, cout * self.kernel, gain)
        self.temporal_b = nk.module.zeros((cout,))
        self._res_mode = "none"
        if residual:
            if cin != cout or stride > 1:
                self._res_mode = "project"
                self.res_w = nk.param((cout, cin, 1), rng, cin)
                self.res_b = nk.module.zeros((cout,))
            else:
                self._res_mode = "identity"

    def spatial_step(self, x: Tensor) -> Tensor:
        mats = self.relations.matrices(x)
        agg = [nk.graph_aggregate(x, A) for A in mats]
        agg = nk.concat(agg, axis=1) if len(agg) > 1 else agg[0]
        w = self.spatial[0] if len(self.spatial) == 1 else nk.concat(self.spatial, axis=1)
        w = nk.reshape(w, w.shape + (1,))
        return nk.temporal_conv1d(agg, w, self.spatial_b)

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.cin:
            raise ShapeError(f"block expects (B, {self.cin}, T, V), got {x.shape}")
        y = self.spatial_step(x)
        y = nk.temporal_conv1d(y, self.temporal_w, self.temporal_b, self.stride, self.kernel // 2)
        if self._res_mode == "identity":
            y = nk.add(y, x)
        elif self._res_mode == "project":
            y = nk.add(y, nk.temporal_conv1d(x, self.res_w, self.res_b, self.stride, 0))
        if self.activation:
            y = nk.relu(y)
        return nk.dropout(y, self.dropout, rng, self.training)


class GCAE(Module):
    def __init__(self, config: GCAEConfig, rng: np.random.Generator):
        config.validate()
        self._config = config
        c = config
        enc_ch = [2, *c.hidden, c.channels]
        pool = c.downsample == "pool"
        nblocks = len(enc_ch) - 1
        self.enc = []
        for i in range(nblocks):
            last = i == nblocks - 1
            self.enc.append(STGCNBlock(
                enc_ch[i], enc_ch[i + 1], c.num_nodes, rng,
                stride=c.factor if last and not pool else 1, kernel=c.kernel,
                num_relations=c.num_relations, dropout=0.0 if last else c.dropout,
                residual=c.residual, activation=not last, bones=c.bones,
            ))
        dec_ch = enc_ch[::-1]
        self.dec = []
        for i in range(nblocks):
            last = i == nblocks - 1
            self.dec.append(STGCNBlock(
                dec_ch[i], dec_ch[i + 1], c.num_nodes, rng, stride=1, kernel=c.kernel,
                num_relations=c.num_relations, dropout=0.0 if last else c.dropout,
                residual=c.residual, activation=not last, bones=c.bones,
            ))

    @property
    def config(self) -> GCAEConfig:
        return self._config

    def encode(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        """(B, 2, n, V) -> (B, C, N, V)."""
        c = self._config
        x = nk.ops.as_tensor(x)
        if x.ndim == 3:
            x = nk.reshape(x, (1,) + x.shape)
        if x.shape[1:] != (2, c.window, c.num_nodes):
            raise ShapeError(f"encoder expects (B, 2, {c.window}, {c.num_nodes}), got {x.shape}")
        for block in self.enc:
            x = block(x, rng)
        if c.downsample == "pool" and c.factor > 1:
            B, C, T, V = x.shape
            x = nk.mean(nk.reshape(x, (B, C, T // c.factor, c.factor, V)), axis=3)
        return x

    def tokens(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        """(B, 2, n, V) -> (B, N, C*V); token j flattens the (C, V) slice at step j."""
        z = self.encode(x, rng)
        B, C, N, V = z.shape
        return nk.reshape(nk.transpose(z, (0, 2, 1, 3)), (B, N, C * V))

    def decode(self, tokens: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        """(B, N, C*V) -> (B, 2, n, V)."""
        c = self._config
        tokens = nk.ops.as_tensor(tokens)
        if tokens.ndim == 2:
            tokens = nk.reshape(tokens, (1,) + tokens.shape)
        if tokens.shape[1:] != (c.num_tokens, c.token_width):
            raise ShapeError(f"decoder expects (B, {c.num_tokens}, {c.token_width}), got {tokens.shape}")
        B = tokens.shape[0]
        z = nk.transpose(nk.reshape(tokens, (B, c.num_tokens, c.channels, c.num_nodes)), (0, 2, 1, 3))
        z = nk.repeat(z, c.factor, axis=2)
        for block in self.dec:
            z = block(z, rng)
        return z

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        return self.decode(self.tokens(x, rng), rng)

    def encoder_parameters(self) -> dict:
        return {k: v for k, v in self.named_parameters().items() if k.startswith("enc.")}


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 8
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    losses: list = field(default_factory=list)


def seed_streams(seed: int, stage: int = 1, count: int = 3) -> list[np.random.Generator]:
    """Independent generators for init, shuffling and dropout of one training stage."""
    children = np.random.SeedSequence([seed, stage]).spawn(count)
    return [np.random.default_rng(s) for s in children]


def iterate_minibatches(n_items: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n_items)
    for i in range(0, n_items, batch_size):
        yield order[i:i + batch_size]


def fit_reconstruction(model: Module, forward, target_of, data: np.ndarray, train: TrainConfig,
                       shuffle_rng, dropout_rng, on_epoch=None) -> list[float]:
    """Generic minibatch Adam loop minimizing mse(forward(batch), target_of(batch))."""
    params = model.named_parameters()
    opt = nk.Adam(params, train.lr, train.beta1, train.beta2, train.eps)
    losses = []
    model.train()
    for epoch in range(train.epochs):
        total = 0.0
        for idx in iterate_minibatches(len(data), train.batch_size, shuffle_rng):
            batch = data[idx]
            opt.zero_grad()
            loss = nk.mse(forward(batch, dropout_rng), target_of(batch))
            nk.backward(loss)
            opt.step()
            total += loss.item() * len(idx)
        losses.append(total / len(data))
        if on_epoch is not None:
            on_epoch(epoch, losses[-1])
    model.eval()
    return losses


def train_gcae(windows: np.ndarray, config: GCAEConfig, seed: int = 0,
               train: TrainConfig | None = None, on_epoch=None) -> TrainResult:
    """Stage 1: fit the autoencoder to reconstruct normal windows ``(M, 2, n, V)``."""
    config.validate()
    train = train or TrainConfig()
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 4 or len(windows) == 0:
        raise ConfigError("GCAE training needs a non-empty (M, 2, n, V) window array")
    init_rng, shuffle_rng, drop_rng = seed_streams(seed, stage=1)
    model = GCAE(config, init_rng)
    losses = fit_reconstruction(
        model, lambda b, r: model(Tensor(b), r), lambda b: Tensor(b),
        windows, train, shuffle_rng, drop_rng, on_epoch,
    )
    return TrainResult(gcae_checkpoint(model, seed, train, losses), losses)


def gcae_checkpoint(model: GCAE, seed: int = 0, train: TrainConfig | None = None,
                    losses=None) -> ModelCheckpoint:
    params = model.state_dict()
    enc = {k: v for k, v in params.items() if k.startswith("enc.")}
    meta = {
        "frozen_encoder": True,
        "encoder_checksum": nk.params_checksum(enc),
        "seed": seed,
        "train": asdict(train) if train else {},
        "losses": [float(v) for v in (losses or [])],
    }
    return ModelCheckpoint("gcae", config_to_dict(model.config), params, meta)


def config_to_dict(cfg: GCAEConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = list(cfg.hidden)
    d["keypoints"] = None if cfg.keypoints is None else list(cfg.keypoints)
    d["bones"] = None if cfg.bones is None else [list(b) for b in cfg.bones]
    return d


def gcae_from_checkpoint(ckpt: ModelCheckpoint) -> GCAE:
    if ckpt.kind != "gcae":
        raise ConfigError(f"expected a gcae checkpoint, got {ckpt.kind!r}")
    cfg = GCAEConfig(**ckpt.config)
    model = GCAE(cfg, np.random.default_rng(0))
    model.load_state_dict(ckpt.params)
    return model.eval()
