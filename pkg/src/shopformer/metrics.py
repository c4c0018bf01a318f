"""Frame-level score aggregation and threshold metrics.

Label 1 (shoplifting) is the positive class and higher scores mean "more
anomalous". Every metric is computed from one sorted pass over the scores.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, UndefinedMetricError

METRIC_COLUMNS = ("AUC-ROC", "AUC-PR", "EER", "EER_TH", "ER10", "ER10_TH")


@dataclass(frozen=True)
class WindowScore:
    video_id: str
    person_id: int
    start_frame: int
    n: int
    score: float


@dataclass(frozen=True)
class ScoredFrame:
    video_id: str
    frame_index: int
    score: float
    label: int  # -1 when the frame has no label
    covered: bool = True


def aggregate_frame_scores(window_scores, labels: dict | None = None,
                           overlap: str = "mean", persons: str = "max") -> list[ScoredFrame]:
    """Spread window scores onto frames.

    Overlapping windows of one person are reduced with ``overlap``; several
    persons in one frame with ``persons`` (``"mean"`` or ``"max"``). With
    ``labels``, exactly the labeled frames are returned and uncovered ones get
    score 0 with ``covered=False``; without labels, every covered frame is
    returned with label -1.
    """
    reducers = {"mean": np.mean, "max": np.max}
    if overlap not in reducers or persons not in reducers:
        raise ConfigError(f"reductions must be 'mean' or 'max' (got {overlap!r}, {persons!r})")
    per_person = defaultdict(list)
    for w in window_scores:
        for t in range(w.start_frame, w.start_frame + w.n):
            per_person[(w.video_id, t, w.person_id)].append(w.score)
    per_frame = defaultdict(list)
    for (video, t, _), vals in per_person.items():
        per_frame[(video, t)].append(float(reducers[overlap](vals)))
    frame_score = {k: float(reducers[persons](v)) for k, v in per_frame.items()}
    if labels is None:
        return [ScoredFrame(v, t, s, -1) for (v, t), s in sorted(frame_score.items())]
    out = []
    for (video, t), y in sorted(labels.items()):
        s = frame_score.get((video, t))
        out.append(ScoredFrame(video, t, 0.0 if s is None else s, int(y), s is not None))
    return out


def _arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    if s.shape != y.shape:
        raise ConfigError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise ConfigError("scores must be finite")
    if np.any((y != 0) & (y != 1)):
        raise ConfigError("labels must be 0 or 1")
    return s, y


def _require_both(y, name):
    pos = int(y.sum())
    if pos == 0 or pos == y.size:
        raise UndefinedMetricError(f"{name} needs both classes present")
    return pos, y.size - pos


def _counts_by_value(s, y):
    """Unique scores ascending with positive/negative counts at each."""
    values, inv = np.unique(s, return_inverse=True)
    pos = np.bincount(inv, weights=y, minlength=values.size).astype(np.int64)
    neg = np.bincount(inv, minlength=values.size).astype(np.int64) - pos
    return values, pos, neg


def roc_curve(scores, labels):
    """ROC vertices (fpr, tpr, thresholds) for "predict positive iff score >= threshold"."""
    s, y = _arrays(scores, labels)
    P, N = _require_both(y, "ROC")
    values, pos, neg = _counts_by_value(s, y)
    tp = np.concatenate([[0], np.cumsum(pos[::-1])])
    fp = np.concatenate([[0], np.cumsum(neg[::-1])])
    thresholds = np.concatenate([[np.inf], values[::-1]])
    return fp / N, tp / P, thresholds


def roc_auc(scores, labels) -> float:
    """Trapezoidal area under the ROC; tied scores contribute one half."""
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def pr_curve(scores, labels):
    """(precision, recall, thresholds) at each distinct score, highest threshold first."""
    s, y = _arrays(scores, labels)
    P = int(y.sum())
    if P == 0:
        raise UndefinedMetricError("PR curve needs at least one positive")
    values, pos, neg = _counts_by_value(s, y)
    tp = np.cumsum(pos[::-1])
    fp = np.cumsum(neg[::-1])
    return tp / (tp + fp), tp / P, values[::-1]


def pr_auc(scores, labels) -> float:
    """Average precision: sum over thresholds of (R_k - R_{k-1}) * P_k."""
    precision, recall, _ = pr_curve(scores, labels)
    return float(np.sum(np.diff(np.concatenate([[0.0], recall])) * precision))


def threshold_sweep(scores, labels):
    """Error rates at every candidate threshold for "predict positive iff score > threshold".

    Candidates, ascending: -inf, midpoints between consecutive distinct scores, +inf.
    Returns ``(thresholds, fp, fn, P, N)`` with integer counts.
    """
    s, y = _arrays(scores, labels)
    P, N = _require_both(y, "threshold metrics")
    values, pos, neg = _counts_by_value(s, y)
    thresholds = np.concatenate([[-np.inf], (values[:-1] + values[1:]) / 2.0, [np.inf]])
    fn = np.concatenate([[0], np.cumsum(pos)])       # positives at or below the threshold
    fp = N - np.concatenate([[0], np.cumsum(neg)])   # negatives above it
    return thresholds, fp, fn, P, N


def eer(scores, labels) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Picks the candidate minimizing |FPR - FNR| (ties go to the lower
    threshold) and reports (FPR + FNR) / 2 there.
    """
    thresholds, fp, fn, P, N = threshold_sweep(scores, labels)
    gap = np.abs(fp * P - fn * N)  # exact integer proxy for |FPR - FNR| * N * P
    i = int(np.argmin(gap))
    return float((fp[i] / N + fn[i] / P) / 2.0), float(thresholds[i])


def fnr_at_fpr(scores, labels, target_fpr: float = 0.10) -> tuple[float, float]:
    """False-negative rate at the lowest threshold whose FPR does not exceed ``target_fpr``."""
    thresholds, fp, fn, P, N = threshold_sweep(scores, labels)
    ok = np.flatnonzero(fp / N <= target_fpr)
    i = int(ok[0])  # +inf always qualifies
    return float(fn[i] / P), float(thresholds[i])


def evaluate(scores, labels, target_fpr: float = 0.10) -> dict:
    """All headline metrics as one row keyed by :data:`METRIC_COLUMNS`."""
    e, e_th = eer(scores, labels)
    er, er_th = fnr_at_fpr(scores, labels, target_fpr)
    return {
        "AUC-ROC": roc_auc(scores, labels),
        "AUC-PR": pr_auc(scores, labels),
        "EER": e,
        "EER_TH": e_th,
        "ER10": er,
        "ER10_TH": er_th,
    }


def evaluate_frames(frames: list[ScoredFrame], target_fpr: float = 0.10) -> dict:
    labeled = [f for f in frames if f.label in (0, 1)]
    return evaluate([f.score for f in labeled], [f.label for f in labeled], target_fpr)


# frame_id is the window's last frame, so n = frame_id - t0 + 1
WINDOW_SCORE_COLUMNS = ("video_id", "frame_id", "person_id", "t0", "score")
FRAME_SCORE_COLUMNS = ("video_id", "frame_id", "score", "label", "covered")


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_rows(path, columns, rows):
    """CSV with a header; floats use ``repr`` so they read back bit-exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_rows(path) -> tuple[list[str], list[dict]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            return list(reader.fieldnames or []), rows
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def write_window_scores(path, scores):
    write_rows(path, WINDOW_SCORE_COLUMNS, (
        {"video_id": s.video_id, "frame_id": s.start_frame + s.n - 1, "person_id": s.person_id,
         "t0": s.start_frame, "score": float(s.score)} for s in scores))


def read_window_scores(path) -> list[WindowScore]:
    cols, rows = read_rows(path)
    _require_columns(path, cols, WINDOW_SCORE_COLUMNS)
    try:
        out = [WindowScore(r["video_id"], int(r["person_id"]), int(r["t0"]),
                           int(r["frame_id"]) - int(r["t0"]) + 1, float(r["score"])) for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    bad = [w for w in out if w.n < 1]
    if bad:
        raise DataError(f"{path}: window ending before it starts ({bad[0].video_id}, t0={bad[0].start_frame})")
    return out


def write_frame_scores(path, frames):
    write_rows(path, FRAME_SCORE_COLUMNS, (
        {"video_id": f.video_id, "frame_id": f.frame_index, "score": float(f.score),
         "label": f.label, "covered": int(f.covered)} for f in frames))


def read_frame_scores(path) -> list[ScoredFrame]:
    cols, rows = read_rows(path)
    _require_columns(path, cols, ("video_id", "frame_id", "score"))
    try:
        return [ScoredFrame(r["video_id"], int(r["frame_id"]), float(r["score"]),
                            int(r.get("label") or -1), bool(int(r.get("covered") or 1)))
                for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def attach_labels(frames: list[ScoredFrame], labels: dict) -> list[ScoredFrame]:
    """Restrict scored frames to the labeled set; labeled frames with no score count as uncovered."""
    by_key = {(f.video_id, f.frame_index): f for f in frames}
    out = []
    for (video, t), y in sorted(labels.items()):
        f = by_key.get((video, t))
        out.append(ScoredFrame(video, t, 0.0 if f is None else f.score, int(y), f is not None and f.covered))
    return out


def _require_columns(path, have, need):
    missing = [c for c in need if c not in have]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")


def write_metrics_row(path, row: dict, extra: dict | None = None):
    """One-row CSV: optional leading ``extra`` columns, then :data:`METRIC_COLUMNS`."""
    extra = dict(extra or {})
    cols = list(extra) + list(METRIC_COLUMNS)
    write_rows(path, cols, [{**extra, **row}])
