"""Two-stage pipeline orchestration and the ablation grid runner.

A run directory is named by the config hash and holds everything needed to
replay the metrics::

    <out>/<hash>/config.cfg
                 gcae.ckpt           stage 1, encoder marked frozen
                 transformer.ckpt    stage 2, paired to the encoder checksum
                 window_scores.csv
                 frame_scores.csv    aggregated, with labels
                 metrics.csv         config columns + metric columns
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics as M
from .config import PATH_KEYS, ExperimentConfig, canonical_key, format_value, load_config, parse_value, save_config
from .errors import ContractError, ShopformerError
from .gcae import train_gcae
from .numkit import checkpoint as ckpt_io
from .numkit.checkpoint import ModelCheckpoint
from .pose_data import PoseDataset, extract_windows, load_csv, load_poselift, windows_to_batch
from .tokenizer import Tokenizer
from .transformer import score_tokens, train_transformer, transformer_from_checkpoint

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    run_dir: Path
    config: ExperimentConfig
    gcae: ModelCheckpoint
    transformer: ModelCheckpoint
    window_scores: list
    frames: list
    metrics: dict


def load_split(cfg: ExperimentConfig, split: str) -> PoseDataset:
    """Load the train or test split named by the config; malformed records are fatal."""
    if cfg.adapter == "poselift":
        ds = load_poselift(cfg.poselift_root, split)
    elif split == "train":
        ds = load_csv(cfg.train_poses, cfg.train_labels or None)
    else:
        ds = load_csv(cfg.test_poses, cfg.test_labels or None)
    ds.check_errors()
    return ds


def check_normal_only(ds: PoseDataset):
    """The training split must not contain a single shoplifting frame."""
    bad = sorted(k for k, y in ds.labels.items() if y == 1)
    if bad:
        video, t = bad[0]
        raise ContractError(f"training split has {len(bad)} label-1 frame(s), first at {video} frame {t}")


def window_arrays(cfg: ExperimentConfig, ds: PoseDataset):
    windows = extract_windows(ds.frames, cfg.window, cfg.stride)
    arrays = windows_to_batch(windows, cfg.num_nodes, cfg.normalize, cfg.keypoints or None)
    return windows, arrays


def train_stage1(cfg: ExperimentConfig, arrays: np.ndarray) -> ModelCheckpoint:
    result = train_gcae(arrays, cfg.gcae_config(), cfg.seed, cfg.gcae_train(),
                        on_epoch=lambda e, l: log.info("gcae epoch %d loss %.6f", e + 1, l))
    result.checkpoint.meta["normalize"] = cfg.normalize
    return result.checkpoint


def train_stage2(cfg: ExperimentConfig, tokenizer: Tokenizer, arrays: np.ndarray) -> ModelCheckpoint:
    tokens = tokenizer.encode_batch(arrays)
    result = train_transformer(tokens, cfg.transformer_config(), cfg.seed, cfg.transformer_train(),
                               tokenizer.checksum,
                               on_epoch=lambda e, l: log.info("transformer epoch %d loss %.6f", e + 1, l))
    return result.checkpoint


def score_windows(tokenizer: Tokenizer, transformer_ckpt: ModelCheckpoint, windows) -> list:
    """Normality score for every window; the checkpoint pairing is verified first."""
    model = transformer_from_checkpoint(transformer_ckpt, tokenizer.checksum)
    if not windows:
        return []
    scores = score_tokens(model, np.stack([t.tokens for t in tokenizer.tokenize_many(windows)]))
    return [M.WindowScore(w.video_id, w.person_id, w.start_frame, w.n, float(s))
            for w, s in zip(windows, scores)]


def run_pipeline(cfg: ExperimentConfig, out_root="runs") -> RunResult:
    """Stage 1, freeze, stage 2, score the test split, aggregate and evaluate."""
    cfg.validate(check_files=True)
    run_dir = Path(out_root) / cfg.config_hash()
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(_absolute_paths(cfg), run_dir / "config.cfg")

    train = load_split(cfg, "train")
    check_normal_only(train)
    _, train_arrays = window_arrays(cfg, train)
    if len(train_arrays) == 0:
        raise ContractError(f"training split yields no windows of length {cfg.window}")
    log.info("stage 1: %d training windows", len(train_arrays))
    t0 = time.perf_counter()
    gcae_ckpt = train_stage1(cfg, train_arrays)
    ckpt_io.save(gcae_ckpt, run_dir / "gcae.ckpt")
    log.info("stage 1 done in %.1fs", time.perf_counter() - t0)

    tokenizer = Tokenizer(gcae_ckpt)
    before = tokenizer.checksum
    t0 = time.perf_counter()
    tf_ckpt = train_stage2(cfg, tokenizer, train_arrays)
    ckpt_io.save(tf_ckpt, run_dir / "transformer.ckpt")
    log.info("stage 2 done in %.1fs", time.perf_counter() - t0)
    if Tokenizer(gcae_ckpt).checksum != before or before != gcae_ckpt.meta["encoder_checksum"]:
        raise ContractError("encoder parameters changed during stage 2")

    test = load_split(cfg, "test")
    windows, _ = window_arrays(cfg, test)
    window_scores = score_windows(tokenizer, tf_ckpt, windows)
    M.write_window_scores(run_dir / "window_scores.csv", window_scores)
    frames = M.aggregate_frame_scores(window_scores, test.labels, cfg.overlap, cfg.persons)
    M.write_frame_scores(run_dir / "frame_scores.csv", frames)
    uncovered = sum(not f.covered for f in frames)
    if uncovered:
        log.warning("%d labeled frame(s) not covered by any window were scored 0", uncovered)
    row = M.evaluate_frames(frames, cfg.target_fpr)
    M.write_metrics_row(run_dir / "metrics.csv", row, cfg.to_flat())
    log.info("metrics %s", " ".join(f"{k}={v:.4f}" for k, v in row.items()))
    return RunResult(run_dir, cfg, gcae_ckpt, tf_ckpt, window_scores, frames, row)


def _absolute_paths(cfg: ExperimentConfig) -> ExperimentConfig:
    """Data paths resolved so the saved config reloads from inside the run directory."""
    fixed = {k: str(Path(getattr(cfg, k)).resolve()) for k in PATH_KEYS if getattr(cfg, k)}
    return replace(cfg, **fixed)


def replay_metrics(run_dir) -> dict:
    """Recompute the metrics row from a run directory's frame scores alone."""
    frames = M.read_frame_scores(Path(run_dir) / "frame_scores.csv")
    cfg = load_config(Path(run_dir) / "config.cfg")
    return M.evaluate_frames(frames, cfg.target_fpr)


# ---------------------------------------------------------------- grid

@dataclass
class GridCell:
    index: int
    overrides: dict
    status: str = "pending"  # ok | skipped | failed
    reason: str = ""
    row: dict | None = None


def expand_grid(axes: dict) -> list[dict]:
    """Cartesian product in lexicographic order of axis names, values in given order."""
    keys = sorted(canonical_key(k) for k in axes)
    values = {canonical_key(k): list(v) for k, v in axes.items()}
    return [dict(zip(keys, combo)) for combo in itertools.product(*(values[k] for k in keys))]


def parse_axes(specs) -> dict:
    """``["N=1,2,3", "C=4,8"]`` -> ``{"num_tokens": (1, 2, 3), "channels": (4, 8)}``."""
    axes = {}
    for spec in specs:
        key, _, text = spec.partition("=")
        key = canonical_key(key)
        axes[key] = tuple(parse_value(key, v) for v in text.split(",") if v.strip())
    return axes


def _run_cell(base: ExperimentConfig, overrides: dict, out_root) -> dict:
    return run_pipeline(replace(base, **overrides), out_root).metrics


GRID_LOG_COLUMNS = ("cell", "status", "reason")


def run_grid(axes: dict, base: ExperimentConfig, out_root="runs", jobs: int = 1) -> list[GridCell]:
    """Run every feasible combination; infeasible ones are skipped, failures are isolated.

    Writes ``grid.csv`` (config columns + metrics, one row per successful
    cell) and ``grid_log.csv`` (status of every cell) into ``out_root``.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    cells = [GridCell(i, o) for i, o in enumerate(expand_grid(axes))]
    runnable = []
    for cell in cells:
        try:
            replace(base, **cell.overrides).validate(check_files=True)
        except ShopformerError as exc:
            cell.status, cell.reason = "skipped", str(exc)
            log.warning("grid cell %s skipped: %s", cell.overrides, exc)
        else:
            runnable.append(cell)

    def finish(cell, fn):
        try:
            metrics = fn()
        except Exception as exc:  # isolate per cell
            cell.status, cell.reason = "failed", f"{type(exc).__name__}: {exc}"
            log.error("grid cell %s failed: %s", cell.overrides, cell.reason)
        else:
            cfg = replace(base, **cell.overrides)
            cell.status, cell.row = "ok", {**cfg.to_flat(), **metrics}

    if jobs > 1 and len(runnable) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(c, pool.submit(_run_cell, base, c.overrides, out_root / "runs")) for c in runnable]
            for cell, fut in futures:
                finish(cell, fut.result)
    else:
        for cell in runnable:
            finish(cell, lambda c=cell: _run_cell(base, c.overrides, out_root / "runs"))

    rows = [c.row for c in cells if c.row is not None]
    columns = list(base.to_flat()) + list(M.METRIC_COLUMNS)
    M.write_rows(out_root / "grid.csv", columns, rows)
    M.write_rows(out_root / "grid_log.csv", GRID_LOG_COLUMNS, (
        {"cell": " ".join(f"{k}={format_value(v)}" for k, v in c.overrides.items()),
         "status": c.status, "reason": c.reason} for c in cells))
    return cells
