"""Frozen GCAE encoder used as the token producer for the transformer stage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit as nk
from .errors import ConfigError
from .gcae import GCAE, gcae_from_checkpoint
from .numkit.checkpoint import ModelCheckpoint
from .pose_data import PoseWindow, normalize_window


@dataclass(frozen=True)
class TokenSequence:
    video_id: str
    person_id: int
    start_frame: int
    tokens: np.ndarray  # (N, C*V)

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]


class Tokenizer:
    """Inference-only wrapper: no graph is recorded, dropout is off, weights never change."""

    def __init__(self, checkpoint: ModelCheckpoint, normalize: bool | None = None):
        if not checkpoint.meta.get("frozen_encoder"):
            raise ConfigError("checkpoint is not marked as a frozen encoder")
        self.model: GCAE = gcae_from_checkpoint(checkpoint)
        self.model.eval()
        self.normalize = checkpoint.meta.get("normalize", True) if normalize is None else normalize
        self.checksum = nk.params_checksum(
            {k: v.data for k, v in self.model.encoder_parameters().items()}
        )

    @property
    def config(self):
        return self.model.config

    @property
    def window(self) -> int:
        return self.model.config.window

    def encode_batch(self, arrays: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Normalized windows ``(M, 2, n, V)`` -> tokens ``(M, N, C*V)``."""
        arrays = np.asarray(arrays, dtype=np.float64)
        cfg = self.model.config
        if arrays.ndim != 4 or arrays.shape[2] != cfg.window:
            raise ConfigError(f"window length mismatch: tokenizer expects n={cfg.window}, got shape {arrays.shape}")
        out = np.empty((len(arrays), cfg.num_tokens, cfg.token_width))
        with nk.no_grad():
            for i in range(0, len(arrays), batch_size):
                out[i:i + batch_size] = self.model.tokens(nk.Tensor(arrays[i:i + batch_size])).data
        return out

    def tokenize(self, window: PoseWindow) -> TokenSequence:
        if window.n != self.window:
            raise ConfigError(f"window length mismatch: tokenizer expects n={self.window}, got {window.n}")
        arr = normalize_window(window, self.config.num_nodes, self.normalize, self.config.keypoints)
        toks = self.encode_batch(arr[None])[0]
        return TokenSequence(window.video_id, window.person_id, window.start_frame, toks)

    def tokenize_many(self, windows: list[PoseWindow]) -> list[TokenSequence]:
        if not windows:
            return []
        bad = [w for w in windows if w.n != self.window]
        if bad:
            raise ConfigError(f"window length mismatch: tokenizer expects n={self.window}, got {bad[0].n}")
        arrs = np.stack([normalize_window(w, self.config.num_nodes, self.normalize, self.config.keypoints) for w in windows])
        toks = self.encode_batch(arrs)
        return [TokenSequence(w.video_id, w.person_id, w.start_frame, t) for w, t in zip(windows, toks)]


def tokenize(window: PoseWindow, checkpoint: ModelCheckpoint) -> TokenSequence:
    return Tokenizer(checkpoint).tokenize(window)
