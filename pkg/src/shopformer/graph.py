"""Skeleton graph: COCO17 bones, optional virtual center node, and the relation stack."""

from __future__ import annotations

import numpy as np

from . import numkit as nk
from .errors import ConfigError
from .numkit import Module, Tensor

COCO17_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

COCO17_BONES = (
    (15, 13), (13, 11), (16, 14), (14, 12), (11, 12),
    (5, 11), (6, 12), (5, 6), (5, 7), (6, 8), (7, 9), (8, 10),
    (1, 2), (0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 6),
)

VIRTUAL_CENTER = 17
VIRTUAL_BONES = ((17, 5), (17, 6), (17, 11), (17, 12))


def bone_list(num_nodes: int = 18, bones=None) -> tuple:
    """Edge list for the graph; custom ``bones`` allow any node count."""
    if bones is not None:
        bones = tuple((int(a), int(b)) for a, b in bones)
        for a, b in bones:
            if not (0 <= a < num_nodes and 0 <= b < num_nodes) or a == b:
                raise ConfigError(f"bone ({a}, {b}) is invalid for {num_nodes} nodes")
        return bones
    if num_nodes == 17:
        return COCO17_BONES
    if num_nodes == 18:
        return COCO17_BONES + VIRTUAL_BONES
    raise ConfigError(f"unsupported node count {num_nodes}; expected 17 or 18 (or a custom bone list)")


def build_physical_adjacency(num_nodes: int = 18, bones=None) -> np.ndarray:
    """Binary symmetric bone adjacency with zero diagonal."""
    edges = bone_list(num_nodes, bones)
    A = np.zeros((num_nodes, num_nodes))
    for a, b in edges:
        A[a, b] = A[b, a] = 1.0
    return A


def normalize_adjacency(A: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(f"adjacency must be square, got {A.shape}")
    if np.any(A < 0):
        raise ConfigError("adjacency must be non-negative")
    Ah = A + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(Ah.sum(axis=1))
    return Ah * d[:, None] * d[None, :]


def dump_graph(num_nodes: int = 18, bones=None, keypoints=None) -> str:
    """Human-readable node and bone list, one entry per line."""
    edges = bone_list(num_nodes, bones)
    if keypoints is not None:
        names = tuple(COCO17_NAMES[k] for k in keypoints)
    else:
        names = COCO17_NAMES + (("virtual_center",) if num_nodes == 18 else ())
    if len(names) != num_nodes:
        raise ConfigError(f"{len(names)} node names for num_nodes={num_nodes}")
    lines = [f"# nodes={num_nodes} edges={len(edges)}"]
    for i, name in enumerate(names):
        lines.append(f"node {i} {name}")
    for a, b in edges:
        lines.append(f"edge {a} {b} {names[a]}-{names[b]}")
    return "\n".join(lines) + "\n"


class RelationStack(Module):
    """Up to three V x V aggregation matrices for one graph-convolution layer.

    Slot 0 is the frozen normalized bone adjacency. Slot 1 is a free V x V
    parameter shared by all inputs, row-softmaxed. Slot 2 is computed per
    input from embedded node-feature similarity, row-softmaxed.
    """

    def __init__(self, num_nodes: int, in_channels: int, num_relations: int = 3,
                 rng: np.random.Generator | None = None, embed_channels: int | None = None,
                 bones=None):
        if num_relations not in (1, 2, 3):
            raise ConfigError(f"relation count must be 1, 2 or 3, got {num_relations}")
        self.num_relations = num_relations
        self._physical = normalize_adjacency(build_physical_adjacency(num_nodes, bones))
        if num_relations >= 2:
            self.shared_logits = nk.module.zeros((num_nodes, num_nodes))
        if num_relations == 3:
            rng = rng if rng is not None else np.random.default_rng(0)
            ce = embed_channels or max(in_channels, 4)
            self._embed = ce
            self.theta = nk.param((ce, in_channels), rng, in_channels)
            self.phi = nk.param((ce, in_channels), rng, in_channels)

    @property
    def physical(self) -> np.ndarray:
        return self._physical

    def shared(self) -> Tensor:
        return nk.softmax(self.shared_logits, axis=-1)

    def instance(self, x: Tensor) -> Tensor:
        """Per-sample attention over nodes for ``x`` of shape (B, C, T, V) -> (B, V, V)."""
        xm = nk.mean(x, axis=2)  # (B, C, V)
        a = nk.matmul(self.theta, xm)
        b = nk.matmul(self.phi, xm)
        scores = nk.matmul(nk.transpose(a, (0, 2, 1)), b)
        return nk.softmax(nk.scale(scores, 1.0 / np.sqrt(self._embed)), axis=-1)

    def matrices(self, x: Tensor) -> list:
        """Relation matrices for input ``x``: (V, V) tensors, or (B, V, V) for the instance slot."""
        mats = [Tensor(self._physical)]
        if self.num_relations >= 2:
            mats.append(self.shared())
        if self.num_relations == 3:
            mats.append(self.instance(x))
        return mats


def make_relation_stack(num_nodes: int = 18, in_channels: int = 2, num_relations: int = 3,
                        rng: np.random.Generator | None = None, bones=None) -> RelationStack:
    return RelationStack(num_nodes, in_channels, num_relations, rng, bones=bones)
