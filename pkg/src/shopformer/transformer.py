"""Encoder-decoder transformer that reconstructs a positionally encoded token sequence.

The decoder input is the encoded sequence itself under a causal self-attention
mask; the model output is compared to that same sequence, and the mean squared
error is the window's anomaly score (higher means less normal).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numkit as nk
from .errors import ConfigError, PairingError, ShapeError
from .gcae import TrainConfig, TrainResult, fit_reconstruction, seed_streams
from .numkit import Module, Tensor
from .numkit.checkpoint import ModelCheckpoint


@dataclass
class TransformerConfig:
    d_model: int = 144
    layers: int = 2
    heads: int = 2
    ff_dim: int = 64
    dropout: float = 0.1
    ln_eps: float = 1e-5

    def validate(self):
        if self.d_model < 2 or self.d_model % 2:
            raise ConfigError(f"d_model must be even for the sinusoidal encoding, got {self.d_model}")
        if self.heads < 1 or self.d_model % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide d_model ({self.d_model})")
        if self.layers < 1 or self.ff_dim < 1:
            raise ConfigError("layers and ff_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        return self


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same)."""
    if d_model % 2:
        raise ConfigError(f"d_model must be even, got {d_model}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    rates = np.power(10000.0, np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(pos / rates)
    pe[:, 1::2] = np.cos(pos / rates)
    return pe


def encode_positions(tokens: np.ndarray) -> np.ndarray:
    """Add the sinusoidal table to tokens shaped (..., N, d)."""
    tokens = np.asarray(tokens, dtype=np.float64)
    return tokens + positional_encoding(tokens.shape[-2], tokens.shape[-1])


def causal_mask(n: int) -> np.ndarray:
    """Additive mask: 0 on and below the diagonal, -inf above."""
    return np.triu(np.full((n, n), -np.inf), k=1)


def attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None):
    """Scaled dot-product attention over the last two axes.

    Returns ``(output, weights)``; ``weights`` rows sum to one over unmasked keys.
    """
    q, k, v = nk.ops.as_tensor(q), nk.ops.as_tensor(k), nk.ops.as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} do not line up")
    scores = nk.scale(nk.matmul(q, nk.transpose(k, _swap_last(k.ndim))), 1.0 / np.sqrt(q.shape[-1]))
    if mask is not None:
        scores = nk.add(scores, mask)
    weights = nk.softmax(scores, axis=-1)
    return nk.matmul(weights, v), weights


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return axes


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.w = nk.param((d_in, d_out), rng, d_in)
        self.b = nk.module.zeros((d_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return nk.add(nk.matmul(x, self.w), self.b)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = nk.module.ones((d,))
        self.beta = nk.module.zeros((d,))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return nk.layer_norm(x, self.gamma, self.beta, self._eps)


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        self._heads = heads
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.o = Linear(d_model, d_model, rng)

    def _split(self, x: Tensor) -> Tensor:
        B, N, d = x.shape
        return nk.transpose(nk.reshape(x, (B, N, self._heads, d // self._heads)), (0, 2, 1, 3))

    def __call__(self, query: Tensor, memory: Tensor, mask=None) -> Tensor:
        out, _ = attention(self._split(self.q(query)), self._split(self.k(memory)),
                           self._split(self.v(memory)), mask)
        B, H, N, dh = out.shape
        return self.o(nk.reshape(nk.transpose(out, (0, 2, 1, 3)), (B, N, H * dh)))


class FeedForward(Module):
    def __init__(self, d_model: int, ff_dim: int, dropout: float, rng: np.random.Generator):
        self.inner = Linear(d_model, ff_dim, rng)
        self.outer = Linear(ff_dim, d_model, rng)
        self._p = dropout

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        h = nk.dropout(nk.relu(self.inner(x)), self._p, rng, self.training)
        return self.outer(h)


class EncoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng)
        self.ff = FeedForward(cfg.d_model, cfg.ff_dim, cfg.dropout, rng)
        self.norm1 = LayerNorm(cfg.d_model, cfg.ln_eps)
        self.norm2 = LayerNorm(cfg.d_model, cfg.ln_eps)
        self._p = cfg.dropout

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        drop = lambda t: nk.dropout(t, self._p, rng, self.training)  # noqa: E731
        x = self.norm1(nk.add(x, drop(self.attn(x, x))))
        return self.norm2(nk.add(x, drop(self.ff(x, rng))))


class DecoderLayer(Module):
    def __init__(self, cfg: TransformerConfig, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng)
        self.ff = FeedForward(cfg.d_model, cfg.ff_dim, cfg.dropout, rng)
        self.norm1 = LayerNorm(cfg.d_model, cfg.ln_eps)
        self.norm2 = LayerNorm(cfg.d_model, cfg.ln_eps)
        self.norm3 = LayerNorm(cfg.d_model, cfg.ln_eps)
        self._p = cfg.dropout

    def __call__(self, x: Tensor, memory: Tensor, mask, rng=None) -> Tensor:
        drop = lambda t: nk.dropout(t, self._p, rng, self.training)  # noqa: E731
        x = self.norm1(nk.add(x, drop(self.self_attn(x, x, mask))))
        x = self.norm2(nk.add(x, drop(self.cross_attn(x, memory))))
        return self.norm3(nk.add(x, drop(self.ff(x, rng))))


class ReconstructionTransformer(Module):
    def __init__(self, config: TransformerConfig, rng: np.random.Generator):
        config.validate()
        self._config = config
        self.encoder = [EncoderLayer(config, rng) for _ in range(config.layers)]
        self.decoder = [DecoderLayer(config, rng) for _ in range(config.layers)]
        self.head = Linear(config.d_model, config.d_model, rng)

    @property
    def config(self) -> TransformerConfig:
        return self._config

    def __call__(self, encoded, rng=None) -> Tensor:
        """Reconstruct positionally encoded tokens ``(B, N, d)``; output has the same shape."""
        x = nk.ops.as_tensor(encoded)
        if x.ndim == 2:
            x = nk.reshape(x, (1,) + x.shape)
        if x.ndim != 3 or x.shape[-1] != self._config.d_model:
            raise ShapeError(f"transformer expects (B, N, {self._config.d_model}), got {x.shape}")
        inp = nk.dropout(x, self._config.dropout, rng, self.training)
        memory = inp
        for layer in self.encoder:
            memory = layer(memory, rng)
        mask = causal_mask(x.shape[1])
        y = inp
        for layer in self.decoder:
            y = layer(y, memory, mask, rng)
        return self.head(y)

    def reconstruct(self, encoded) -> np.ndarray:
        """Inference-mode forward pass; switches the model to eval."""
        self.eval()
        with nk.no_grad():
            return self(encoded).data


def normality_score(encoded, reconstruction) -> np.ndarray | float:
    """Per-window MSE between encoded tokens and their reconstruction.

    Accepts a single window ``(N, d)`` (returns a float) or a batch ``(B, N, d)``.
    """
    a = np.asarray(encoded.data if isinstance(encoded, Tensor) else encoded, dtype=np.float64)
    b = np.asarray(reconstruction.data if isinstance(reconstruction, Tensor) else reconstruction, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"normality_score: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return float(np.mean((a - b) ** 2))
    return nk.ops.mse_per_sample(a, b)


def score_tokens(model: ReconstructionTransformer, tokens: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Anomaly score for every window in ``tokens (M, N, d)`` (raw, not yet encoded)."""
    model.eval()
    encoded = encode_positions(tokens)
    out = np.empty(len(encoded))
    for i in range(0, len(encoded), batch_size):
        chunk = encoded[i:i + batch_size]
        out[i:i + batch_size] = normality_score(chunk, model.reconstruct(chunk))
    return out


def train_transformer(tokens: np.ndarray, config: TransformerConfig, seed: int = 0,
                      train: TrainConfig | None = None, tokenizer_checksum: str = "",
                      on_epoch=None) -> TrainResult:
    """Stage 2: fit the transformer to reconstruct encoded normal token sequences ``(M, N, d)``."""
    config.validate()
    train = train or TrainConfig()
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 3 or len(tokens) == 0:
        raise ConfigError("transformer training needs a non-empty (M, N, d) token array")
    if tokens.shape[-1] != config.d_model:
        raise ConfigError(f"token width {tokens.shape[-1]} != d_model {config.d_model}")
    init_rng, shuffle_rng, drop_rng = seed_streams(seed, stage=2)
    model = ReconstructionTransformer(config, init_rng)
    encoded = encode_positions(tokens)
    losses = fit_reconstruction(
        model, lambda b, r: model(Tensor(b), r), lambda b: Tensor(b),
        encoded, train, shuffle_rng, drop_rng, on_epoch,
    )
    meta = {
        "tokenizer_checksum": tokenizer_checksum,
        "seed": seed,
        "train": asdict(train),
        "losses": [float(v) for v in losses],
    }
    ckpt = ModelCheckpoint("transformer", asdict(config), model.state_dict(), meta)
    return TrainResult(ckpt, losses)


def transformer_from_checkpoint(ckpt: ModelCheckpoint, tokenizer_checksum: str | None = None) -> ReconstructionTransformer:
    """Rebuild a trained transformer; verifies the tokenizer pairing when a checksum is given."""
    if ckpt.kind != "transformer":
        raise ConfigError(f"expected a transformer checkpoint, got {ckpt.kind!r}")
    expected = ckpt.meta.get("tokenizer_checksum", "")
    if tokenizer_checksum is not None and expected != tokenizer_checksum:
        raise PairingError(
            f"transformer was trained against tokenizer {expected[:12] or '<none>'}, "
            f"got {tokenizer_checksum[:12]}"
        )
    model = ReconstructionTransformer(TransformerConfig(**ckpt.config), np.random.default_rng(0))
    model.load_state_dict(ckpt.params)
    return model.eval()
