"""Command-line entry point: ``shopformer <command> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 contract violation.
Failures print one line to stderr: ``error code=<CODE> message=<text>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import metrics as M
from .config import load_config
from .errors import ConfigError, DataError, ShopformerError
from .graph import dump_graph
from .numkit import checkpoint as ckpt_io
from .pose_data import extract_windows, load_dataset, parse_label_rows
from .report import make_report
from .synth import SynthParams, write_synth
from .tokenizer import Tokenizer
from . import trainer

log = logging.getLogger("shopformer")


def _config(args, check_files=False):
    cfg = load_config(args.config, args.set)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg.validate(check_files=check_files)


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------ commands

def cmd_validate_data(args):
    ds = load_dataset(args.poses, args.labels, adapter=args.adapter, split=args.split)
    videos = {f.video_id for f in ds.frames}
    tracks = {(f.video_id, f.person_id) for f in ds.frames}
    positives = sum(ds.labels.values())
    print(f"records={len(ds.frames)} videos={len(videos)} tracks={len(tracks)} "
          f"labels={len(ds.labels)} positive={positives} errors={len(ds.errors)}")
    for err in ds.errors:
        print(f"  {err}")
    if args.window:
        print(f"windows(n={args.window})={len(extract_windows(ds.frames, args.window, args.stride))}")
    ds.check_errors()


def cmd_train_gcae(args):
    cfg = _config(args, check_files=True)
    out = _out(args, ".")
    train = trainer.load_split(cfg, "train")
    trainer.check_normal_only(train)
    _, arrays = trainer.window_arrays(cfg, train)
    if len(arrays) == 0:
        raise DataError(f"training split yields no windows of length {cfg.window}")
    ckpt = trainer.train_stage1(cfg, arrays)
    path = out / "gcae.ckpt"
    ckpt_io.save(ckpt, path)
    print(f"gcae={path} encoder_checksum={ckpt.meta['encoder_checksum']}")


def cmd_train_transformer(args):
    cfg = _config(args, check_files=True)
    out = _out(args, ".")
    tokenizer = Tokenizer(ckpt_io.load(args.gcae))
    _check_tokenizer_matches(cfg, tokenizer)
    train = trainer.load_split(cfg, "train")
    trainer.check_normal_only(train)
    _, arrays = trainer.window_arrays(cfg, train)
    if len(arrays) == 0:
        raise DataError(f"training split yields no windows of length {cfg.window}")
    ckpt = trainer.train_stage2(cfg, tokenizer, arrays)
    path = out / "transformer.ckpt"
    ckpt_io.save(ckpt, path)
    print(f"transformer={path} tokenizer_checksum={tokenizer.checksum}")


def _check_tokenizer_matches(cfg, tokenizer):
    tc = tokenizer.config
    if (tc.window, tc.num_tokens, tc.channels, tc.num_nodes) != (cfg.window, cfg.num_tokens, cfg.channels, cfg.num_nodes):
        raise ConfigError(
            f"config (n={cfg.window}, N={cfg.num_tokens}, C={cfg.channels}, V={cfg.num_nodes}) does not match "
            f"the tokenizer (n={tc.window}, N={tc.num_tokens}, C={tc.channels}, V={tc.num_nodes})"
        )


def _test_windows(args, tokenizer):
    ds = load_dataset(args.poses, args.labels, adapter=args.adapter, split=args.split)
    ds.check_errors()
    return ds, extract_windows(ds.frames, tokenizer.window, args.stride)


def cmd_tokenize(args):
    tokenizer = Tokenizer(ckpt_io.load(args.gcae))
    _, windows = _test_windows(args, tokenizer)
    seqs = tokenizer.tokenize_many(windows)
    out = Path(args.out or "tokens.csv")
    width = tokenizer.config.token_width
    cols = ["video_id", "person_id", "start_frame", "token"] + [f"v{i}" for i in range(width)]
    rows = []
    for s in seqs:
        for j, tok in enumerate(s.tokens):
            row = {"video_id": s.video_id, "person_id": s.person_id, "start_frame": s.start_frame, "token": j}
            row.update({f"v{i}": float(v) for i, v in enumerate(tok)})
            rows.append(row)
    M.write_rows(out, cols, rows)
    print(f"tokens={out} windows={len(seqs)} N={tokenizer.config.num_tokens} width={width}")


def cmd_score(args):
    tokenizer = Tokenizer(ckpt_io.load(args.gcae))
    tf_ckpt = ckpt_io.load(args.transformer)
    ds, windows = _test_windows(args, tokenizer)
    scores = trainer.score_windows(tokenizer, tf_ckpt, windows)
    out = _out(args, ".")
    M.write_window_scores(out / "window_scores.csv", scores)
    frames = M.aggregate_frame_scores(scores, ds.labels or None, args.overlap, args.persons)
    M.write_frame_scores(out / "frame_scores.csv", frames)
    print(f"window_scores={out / 'window_scores.csv'} frame_scores={out / 'frame_scores.csv'} windows={len(scores)}")


def cmd_eval(args):
    cols, _ = M.read_rows(args.scores)
    labels = None
    if args.labels:
        labels = _read_labels(args.labels)
    if "t0" in cols:
        if labels is None:
            raise ConfigError("window scores need --labels to evaluate")
        frames = M.aggregate_frame_scores(M.read_window_scores(args.scores), labels, args.overlap, args.persons)
    else:
        frames = M.read_frame_scores(args.scores)
        if labels is not None:
            frames = M.attach_labels(frames, labels)
    row = M.evaluate_frames(frames, args.target_fpr)
    out = Path(args.out or "metrics.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "metrics.csv"
    M.write_metrics_row(out, row)
    print(" ".join(f"{k}={v:.6f}" for k, v in row.items()))


def _read_labels(path) -> dict:
    labels, errors = {}, []
    for _, lab, err in parse_label_rows(path):
        if err is not None:
            errors.append(str(err))
        elif (lab.video_id, lab.frame_index) in labels:
            errors.append(f"{path}: duplicate label for {(lab.video_id, lab.frame_index)}")
        else:
            labels[(lab.video_id, lab.frame_index)] = lab.label
    if errors:
        raise DataError(f"{len(errors)} malformed label record(s): {'; '.join(errors[:5])}")
    return labels


def cmd_run(args):
    cfg = _config(args, check_files=True)
    result = trainer.run_pipeline(cfg, args.out or "runs")
    print(f"run_dir={result.run_dir}")
    print(" ".join(f"{k}={v:.6f}" for k, v in result.metrics.items()))


def cmd_grid(args):
    cfg = _config(args, check_files=False)
    if not args.axis:
        raise ConfigError("grid needs at least one --axis key=v1,v2,...")
    axes = trainer.parse_axes(args.axis)
    cells = trainer.run_grid(axes, cfg, args.out or "grid", jobs=args.jobs)
    counts = {s: sum(c.status == s for c in cells) for s in ("ok", "skipped", "failed")}
    print(f"grid={Path(args.out or 'grid') / 'grid.csv'} " + " ".join(f"{k}={v}" for k, v in counts.items()))
    for c in cells:
        if c.status != "ok":
            print(f"  {c.status}: {c.overrides} {c.reason}")


def cmd_synth(args):
    params = SynthParams(args.normal_train, args.normal_test, args.anomalous_test, args.frames,
                         args.seed if args.seed is not None else 0, args.noise)
    files = write_synth(args.out or "synth", params)
    print(f"config={files.config} train={files.train_poses} test={files.test_poses}")


def cmd_graph(args):
    cfg = load_config(args.config, args.set)
    if args.nodes is not None:
        cfg = replace(cfg, num_nodes=args.nodes, keypoints=(), bones=())
    sys.stdout.write(dump_graph(cfg.num_nodes, cfg.bones or None, cfg.keypoints or None))


def cmd_report(args):
    written = make_report(args.csvs, args.out or "report", args.x)
    for p in written:
        print(p)


# ------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    """Usage errors become configuration errors (exit 2, machine-parseable)."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config file (key = value lines)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    data = _Parser(add_help=False)
    data.add_argument("--adapter", choices=("csv", "poselift"), default="csv")
    data.add_argument("--split", default="test", help="split name for the PoseLift adapter")
    data.add_argument("--stride", type=int, default=1, help="window stride")

    agg = _Parser(add_help=False)
    agg.add_argument("--overlap", choices=("mean", "max"), default="mean")
    agg.add_argument("--persons", choices=("mean", "max"), default="max")

    p = _Parser(prog="shopformer", description="Pose-token transformer shoplifting detector.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate-data", parents=[common, data], help="check a pose CSV (and labels)")
    s.add_argument("poses", help="pose CSV, or dataset root for --adapter poselift")
    s.add_argument("--labels")
    s.add_argument("--window", type=int, default=12, help="also count windows of this length (0 to skip)")
    s.set_defaults(func=cmd_validate_data)

    s = sub.add_parser("train-gcae", parents=[common], help="stage 1: train the graph autoencoder")
    s.set_defaults(func=cmd_train_gcae)

    s = sub.add_parser("train-transformer", parents=[common], help="stage 2: train on frozen-encoder tokens")
    s.add_argument("--gcae", required=True, help="stage-1 checkpoint")
    s.set_defaults(func=cmd_train_transformer)

    s = sub.add_parser("tokenize", parents=[common, data], help="write tokens for every window")
    s.add_argument("--gcae", required=True)
    s.add_argument("--poses", required=True)
    s.add_argument("--labels")
    s.set_defaults(func=cmd_tokenize)

    s = sub.add_parser("score", parents=[common, data, agg], help="score windows and frames")
    s.add_argument("--gcae", required=True)
    s.add_argument("--transformer", required=True)
    s.add_argument("--poses", required=True)
    s.add_argument("--labels")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("eval", parents=[common, agg], help="metrics from window or frame scores")
    s.add_argument("--scores", required=True, help="window_scores.csv or frame_scores.csv")
    s.add_argument("--labels", help="label CSV (video_id,frame_id,label)")
    s.add_argument("--target-fpr", type=float, default=0.10)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("run", parents=[common], help="full two-stage pipeline")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("grid", parents=[common], help="ablation grid over config keys")
    s.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2",
                   help="swept key and its values; repeatable")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--normal-train", type=int, default=40)
    s.add_argument("--normal-test", type=int, default=10)
    s.add_argument("--anomalous-test", type=int, default=10)
    s.add_argument("--frames", type=int, default=SynthParams.frames)
    s.add_argument("--noise", type=float, default=SynthParams.noise)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("graph", parents=[common], help="inspect the skeleton graph")
    s.add_argument("action", choices=("dump",))
    s.add_argument("--nodes", type=int, choices=(17, 18))
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("report", parents=[common], help="combine metrics CSVs and plot")
    s.add_argument("csvs", nargs="+")
    s.add_argument("--x", help="column for the x axis (default: the swept column)")
    s.set_defaults(func=cmd_report)
    return p


def _report_error(code: str, message: str):
    print(f"error code={code} message={' '.join(str(message).split())}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        _report_error(exc.code, exc)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ShopformerError as exc:
        _report_error(exc.code, exc)
        return exc.exit_code
    except KeyboardInterrupt:
        _report_error("INTERRUPTED", "interrupted")
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
