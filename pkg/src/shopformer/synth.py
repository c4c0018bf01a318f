"""Synthetic COCO17 walking tracks with injected anomalous spans.

Normal tracks swing arms and legs sinusoidally around a standing template
while the person drifts sideways. Anomalous tracks follow the same recipe but,
over one contiguous span, every joint gets a random phase at a tripled swing
amplitude, the wrists are pulled in toward the hips with per-frame jitter and
the head drops; only that span is labeled 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pose_data import PoseFrame, write_labels_csv, write_poses_csv

# standing pose, pixels, y grows downward
TEMPLATE = np.array([
    (0, -80), (-3, -83), (3, -83), (-6, -80), (6, -80),
    (-12, -65), (12, -65), (-16, -45), (16, -45), (-18, -25), (18, -25),
    (-8, -20), (8, -20), (-9, 5), (9, 5), (-10, 30), (10, 30),
], dtype=np.float64)

# horizontal swing amplitude and phase sign per joint (arms opposite to legs)
SWING = np.array([0, 0, 0, 0, 0, 1, 1, 4, 4, 8, 8, 2, 2, 6, 6, 12, 12], dtype=np.float64)
SIDE = np.array([0, 0, 0, 0, 0, 1, -1, 1, -1, 1, -1, -1, 1, -1, 1, -1, 1], dtype=np.float64)
# (dx, dy) pulls toward a concealing posture: elbows out, wrists at the hips
CONCEAL = {7: (-10.0, 12.0), 8: (10.0, 12.0), 9: (14.0, 40.0), 10: (-14.0, 40.0)}
HEAD = slice(0, 5)


@dataclass(frozen=True)
class SynthParams:
    normal_train: int = 40
    normal_test: int = 10
    anomalous_test: int = 10
    frames: int = 28
    seed: int = 0
    noise: float = 0.5


@dataclass(frozen=True)
class SynthFiles:
    train_poses: Path
    train_labels: Path
    test_poses: Path
    test_labels: Path
    config: Path


def walking_track(rng: np.random.Generator, frames: int, anomaly: tuple | None = None,
                  noise: float = 0.5) -> np.ndarray:
    """Keypoints ``(frames, 17, 2)``; ``anomaly=(start, stop)`` perturbs that frame span."""
    omega = rng.uniform(0.25, 0.4)
    scale = rng.uniform(0.8, 1.2)
    origin = np.array([rng.uniform(100, 500), rng.uniform(200, 300)])
    velocity = rng.uniform(-2.0, 2.0)
    t = np.arange(frames, dtype=np.float64)[:, None]
    phase = omega * t + SIDE * np.pi / 2
    dx = SWING * np.sin(phase)
    dy = 2.0 * np.sin(2 * omega * t) * np.ones(17)
    if anomaly is not None:
        a, b = anomaly
        span = slice(a, b)
        scramble = rng.uniform(0, 2 * np.pi, size=17)
        dx[span] = 3.0 * SWING * np.sin(omega * t[span] * 1.7 + scramble)
        for j, (ox, oy) in CONCEAL.items():
            dx[span, j] += ox + rng.normal(0.0, 6.0, b - a)
            dy[span, j] += oy + rng.normal(0.0, 6.0, b - a)
        dy[span, HEAD] += 15.0
    xy = TEMPLATE[None] + np.stack([dx, dy], axis=-1)
    xy = xy * scale + origin
    xy[..., 0] += velocity * t
    xy += rng.normal(0.0, noise, size=xy.shape)
    return np.round(xy, 3)


def generate(params: SynthParams = SynthParams()):
    """Frames and labels for the train (normals only) and test splits."""
    rng = np.random.default_rng(params.seed)
    F = params.frames
    splits = {"train": ([], {}), "test": ([], {})}
    plan = (
        [("train", f"train_{i:03d}", False) for i in range(params.normal_train)]
        + [("test", f"test_normal_{i:03d}", False) for i in range(params.normal_test)]
        + [("test", f"test_anomaly_{i:03d}", True) for i in range(params.anomalous_test)]
    )
    for split, video, anomalous in plan:
        span = None
        if anomalous:
            length = int(rng.integers(max(1, F // 3), max(2, F // 2) + 1))
            start = int(rng.integers(0, F - length + 1))
            span = (start, start + length)
        xy = walking_track(rng, F, span, params.noise)
        frames, labels = splits[split]
        for t in range(F):
            frames.append(PoseFrame(video, t, 0, xy[t]))
            labels[(video, t)] = int(span is not None and span[0] <= t < span[1])
    return splits


def write_synth(out_dir, params: SynthParams = SynthParams()) -> SynthFiles:
    """Write pose/label CSVs plus a ready-to-run experiment config into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = generate(params)
    files = SynthFiles(out / "train_poses.csv", out / "train_labels.csv",
                       out / "test_poses.csv", out / "test_labels.csv", out / "experiment.cfg")
    write_poses_csv(files.train_poses, splits["train"][0])
    write_labels_csv(files.train_labels, splits["train"][1])
    write_poses_csv(files.test_poses, splits["test"][0])
    write_labels_csv(files.test_labels, splits["test"][1])
    files.config.write_text(
        "# synthetic experiment; paths are relative to this file\n"
        "train_poses = train_poses.csv\n"
        "train_labels = train_labels.csv\n"
        "test_poses = test_poses.csv\n"
        "test_labels = test_labels.csv\n"
        f"seed = {params.seed}\n"
    )
    return files
