"""Pose record ingestion, per-person windowing and coordinate normalization.

Native pose CSV, one row per (frame, person)::

    video_id,frame_id,person_id,x1,y1,...,x17,y17[,c1,...,c17]

Label CSV::

    video_id,frame_id,label        # label 0 = normal, 1 = shoplifting

A header row whose first field is ``video_id`` is skipped. Confidences are
parsed for validation and then discarded.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError

NUM_KEYPOINTS = 17
# COCO17 indices used to place the virtual center node
CENTER_PARENTS = (5, 6, 11, 12)


@dataclass(frozen=True)
class PoseFrame:
    video_id: str
    frame_index: int
    person_id: int
    keypoints: np.ndarray  # (K, 2) pixel coordinates, x then y


@dataclass(frozen=True)
class FrameLabel:
    video_id: str
    frame_index: int
    label: int


@dataclass(frozen=True)
class PoseWindow:
    video_id: str
    person_id: int
    start_frame: int
    frames: tuple

    @property
    def n(self) -> int:
        return len(self.frames)

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.n - 1

    def coords(self) -> np.ndarray:
        """Stacked keypoints, shape (n, K, 2)."""
        return np.stack([f.keypoints for f in self.frames])


@dataclass(frozen=True)
class RecordError:
    path: str
    line: int
    message: str

    def __str__(self):
        return f"{self.path}:{self.line}: {self.message}"


@dataclass
class PoseDataset:
    frames: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)  # (video_id, frame_index) -> 0/1
    errors: list = field(default_factory=list)

    def label_records(self) -> list[FrameLabel]:
        return [FrameLabel(v, t, y) for (v, t), y in sorted(self.labels.items())]

    def check_errors(self):
        if self.errors:
            shown = "; ".join(str(e) for e in self.errors[:5])
            more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
            raise DataError(f"{len(self.errors)} malformed record(s): {shown}{more}")


def _open_rows(path):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip() == "video_id":
                continue
            yield lineno, [c.strip() for c in row]


def _parse_int(text: str, what: str, nonneg: bool = False) -> int:
    try:
        val = int(text)
    except ValueError:
        raise ValueError(f"{what} {text!r} is not an integer") from None
    if nonneg and val < 0:
        raise ValueError(f"{what} must be non-negative, got {val}")
    return val


def parse_pose_rows(path, num_keypoints: int = NUM_KEYPOINTS):
    """Yield (line, PoseFrame | None, RecordError | None) per data line of a pose CSV."""
    k = num_keypoints
    for lineno, row in _open_rows(path):
        try:
            nvals = len(row) - 3
            if nvals not in (2 * k, 3 * k):
                raise ValueError(
                    f"expected {k} keypoints ({2 * k} or {3 * k} values after the ids), got {max(nvals, 0)} values"
                )
            video = row[0]
            if not video:
                raise ValueError("empty video_id")
            frame = _parse_int(row[1], "frame_id", nonneg=True)
            person = _parse_int(row[2], "person_id")
            try:
                vals = np.array([float(c) for c in row[3:]], dtype=np.float64)
            except ValueError:
                raise ValueError("non-numeric keypoint value") from None
            if not np.all(np.isfinite(vals)):
                raise ValueError("non-finite keypoint value")
            kps = vals[: 2 * k].reshape(k, 2)
            yield lineno, PoseFrame(video, frame, person, kps), None
        except ValueError as exc:
            yield lineno, None, RecordError(str(path), lineno, str(exc))


def parse_label_rows(path):
    for lineno, row in _open_rows(path):
        try:
            if len(row) != 3:
                raise ValueError(f"expected 3 fields (video_id,frame_id,label), got {len(row)}")
            frame = _parse_int(row[1], "frame_id", nonneg=True)
            label = _parse_int(row[2], "label")
            if label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {label}")
            yield lineno, FrameLabel(row[0], frame, label), None
        except ValueError as exc:
            yield lineno, None, RecordError(str(path), lineno, str(exc))


def load_csv(poses_path, labels_path=None, num_keypoints: int = NUM_KEYPOINTS) -> PoseDataset:
    """Load the native CSV pair. Malformed records are collected, not raised."""
    ds = PoseDataset()
    seen = set()
    for lineno, rec, err in parse_pose_rows(poses_path, num_keypoints):
        if err is not None:
            ds.errors.append(err)
            continue
        key = (rec.video_id, rec.frame_index, rec.person_id)
        if key in seen:
            ds.errors.append(RecordError(str(poses_path), lineno, f"duplicate record for {key}"))
            continue
        seen.add(key)
        ds.frames.append(rec)
    if labels_path is not None:
        for lineno, lab, err in parse_label_rows(labels_path):
            if err is not None:
                ds.errors.append(err)
                continue
            key = (lab.video_id, lab.frame_index)
            if key in ds.labels:
                ds.errors.append(RecordError(str(labels_path), lineno, f"duplicate label for {key}"))
                continue
            ds.labels[key] = lab.label
    return ds


def load_poselift(root, split: str, num_keypoints: int = NUM_KEYPOINTS) -> PoseDataset:
    """Adapter for the PoseLift release layout.

    Expected on disk (the tracked-person JSON layout shared with STG-NF style
    pose datasets)::

        <root>/pose/<split>/<video>_alphapose_tracked_person.json
            {"<person_id>": {"<frame_id>": {"keypoints": [x, y, c] * 17, ...}}}
        <root>/gt/test_frame_mask/<video>.npy       per-frame 0/1 labels (test only)

    Training videos without a mask are labeled all-normal.
    """
    root = Path(root)
    pose_dir = root / "pose" / split
    if not pose_dir.is_dir():
        raise DataError(f"PoseLift layout: missing directory {pose_dir}")
    ds = PoseDataset()
    k = num_keypoints
    for path in sorted(pose_dir.glob("*.json")):
        video = path.name.split("_alphapose")[0]
        try:
            tracks = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        frames_seen = set()
        for pid, per_frame in sorted(tracks.items(), key=lambda kv: int(kv[0])):
            for fid, rec in sorted(per_frame.items(), key=lambda kv: int(kv[0])):
                kp = np.asarray(rec.get("keypoints", []), dtype=np.float64).reshape(-1)
                if kp.size not in (2 * k, 3 * k):
                    ds.errors.append(RecordError(str(path), -1, f"person {pid} frame {fid}: expected {k} keypoints"))
                    continue
                step = kp.size // k
                xy = kp.reshape(k, step)[:, :2].copy()
                if not np.all(np.isfinite(xy)):
                    ds.errors.append(RecordError(str(path), -1, f"person {pid} frame {fid}: non-finite keypoint"))
                    continue
                ds.frames.append(PoseFrame(video, int(fid), int(pid), xy))
                frames_seen.add(int(fid))
        mask_path = root / "gt" / "test_frame_mask" / f"{video}.npy"
        if mask_path.exists():
            mask = np.load(mask_path).reshape(-1)
            for t, y in enumerate(mask):
                ds.labels[(video, t)] = int(y != 0)
        elif split == "train":
            for t in frames_seen:
                ds.labels[(video, t)] = 0
    return ds


ADAPTERS = ("csv", "poselift")


def load_dataset(path, labels_path=None, adapter: str = "csv", split: str = "test",
                 num_keypoints: int = NUM_KEYPOINTS) -> PoseDataset:
    """Load pose frames and frame labels through one of the format adapters."""
    if adapter == "csv":
        return load_csv(path, labels_path, num_keypoints)
    if adapter == "poselift":
        return load_poselift(path, split, num_keypoints)
    raise DataError(f"unknown dataset adapter {adapter!r} (choose from {ADAPTERS})")


def gap_free_runs(frames: Iterable[PoseFrame]) -> list[list[PoseFrame]]:
    """Split one person's frames into maximal runs of consecutive frame indices."""
    ordered = sorted(frames, key=lambda f: f.frame_index)
    runs: list[list[PoseFrame]] = []
    for f in ordered:
        if runs and f.frame_index == runs[-1][-1].frame_index + 1:
            runs[-1].append(f)
        else:
            runs.append([f])
    return runs


def count_windows(run_length: int, n: int, stride: int) -> int:
    return 0 if run_length < n else (run_length - n) // stride + 1


def extract_windows(frames: Iterable[PoseFrame], n: int = 12, stride: int = 1) -> list[PoseWindow]:
    """Slide a length-``n`` window over every gap-free run of every tracked person.

    Runs are split at missing frames and never interpolated. Output is ordered
    by (video, person, start frame).
    """
    if n < 1 or stride < 1:
        raise DataError(f"window size and stride must be >= 1 (got n={n}, stride={stride})")
    tracks = defaultdict(list)
    for f in frames:
        tracks[(f.video_id, f.person_id)].append(f)
    windows = []
    for (video, person) in sorted(tracks):
        for run in gap_free_runs(tracks[(video, person)]):
            for s in range(0, len(run) - n + 1, stride):
                chunk = tuple(run[s:s + n])
                windows.append(PoseWindow(video, person, chunk[0].frame_index, chunk))
    return windows


def window_to_array(window: PoseWindow, num_nodes: int = 18, keypoints=None) -> np.ndarray:
    """Channel-first coordinates ``(2, n, V)``.

    With ``keypoints`` the listed keypoint indices become the V nodes in that
    order; otherwise V=18 appends the virtual center node to the 17 keypoints.
    """
    xy = window.coords()
    k = xy.shape[1]
    if keypoints is not None:
        idx = list(keypoints)
        if len(idx) != num_nodes or any(not 0 <= i < k for i in idx):
            raise DataError(f"keypoint subset {idx} does not give {num_nodes} nodes out of {k} keypoints")
        xy = xy[:, idx, :]
    elif num_nodes == k + 1:
        center = xy[:, list(CENTER_PARENTS), :].mean(axis=1, keepdims=True)
        xy = np.concatenate([xy, center], axis=1)
    elif num_nodes != k:
        raise DataError(f"cannot build {num_nodes} graph nodes from {k} keypoints")
    return np.ascontiguousarray(xy.transpose(2, 0, 1))


def normalize_coords(arr: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Subtract the mean (x, y) and divide by the pooled std of all coordinates."""
    centered = arr - arr.mean(axis=(1, 2), keepdims=True)
    std = math.sqrt(float(np.mean(centered * centered)))
    return centered / max(std, floor)


def normalize_window(window: PoseWindow, num_nodes: int = 18, normalize: bool = True,
                     keypoints=None) -> np.ndarray:
    arr = window_to_array(window, num_nodes, keypoints)
    return normalize_coords(arr) if normalize else arr


def windows_to_batch(windows: list[PoseWindow], num_nodes: int = 18, normalize: bool = True,
                     keypoints=None) -> np.ndarray:
    """Stack normalized windows into ``(M, 2, n, V)``."""
    if not windows:
        return np.zeros((0, 2, 0, num_nodes))
    return np.stack([normalize_window(w, num_nodes, normalize, keypoints) for w in windows])


def write_poses_csv(path, frames: Iterable[PoseFrame], header: bool = True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            k = NUM_KEYPOINTS
            cols = ["video_id", "frame_id", "person_id"]
            for i in range(1, k + 1):
                cols += [f"x{i}", f"y{i}"]
            w.writerow(cols)
        for f in frames:
            w.writerow([f.video_id, f.frame_index, f.person_id] + [repr(float(v)) for v in f.keypoints.reshape(-1)])


def write_labels_csv(path, labels: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", "frame_id", "label"])
        for (video, frame), y in sorted(labels.items()):
            w.writerow([video, frame, y])
