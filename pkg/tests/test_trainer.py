import time
from dataclasses import replace

import pytest

from shopformer import trainer
from shopformer.config import load_config
from shopformer.errors import ContractError
from shopformer.metrics import METRIC_COLUMNS, read_rows
from shopformer.numkit import checkpoint as ckpt_io
from shopformer.pose_data import write_labels_csv
from shopformer.tokenizer import Tokenizer

ARTIFACTS = ("config.cfg", "gcae.ckpt", "transformer.ckpt", "window_scores.csv", "frame_scores.csv", "metrics.csv")


@pytest.fixture(scope="module")
def smoke_runs(tiny_synth, tmp_path_factory):
    """The smoke config run twice into separate roots; returns (results, seconds)."""
    from conftest import SMOKE_OVERRIDES
    cfg = replace(load_config(tiny_synth.config), **SMOKE_OVERRIDES)
    out = []
    for i in range(2):
        t0 = time.process_time()
        res = trainer.run_pipeline(cfg, tmp_path_factory.mktemp(f"runs{i}"))
        out.append((res, time.process_time() - t0))
    return out


def test_smoke_config_completes_quickly(smoke_runs):
    res, seconds = smoke_runs[0]
    assert seconds < 60
    for name in ARTIFACTS:
        assert (res.run_dir / name).is_file()
    assert res.run_dir.name == res.config.config_hash()
    assert set(res.metrics) == set(METRIC_COLUMNS)


def test_identical_config_reproduces_bit_exactly(smoke_runs):
    (a, _), (b, _) = smoke_runs
    for name in ARTIFACTS:
        assert (a.run_dir / name).read_bytes() == (b.run_dir / name).read_bytes(), name
    assert a.metrics == b.metrics


def test_encoder_frozen_across_stage_two(smoke_runs):
    res, _ = smoke_runs[0]
    gcae = ckpt_io.load(res.run_dir / "gcae.ckpt")
    tf = ckpt_io.load(res.run_dir / "transformer.ckpt")
    checksum = Tokenizer(gcae).checksum
    assert checksum == gcae.meta["encoder_checksum"] == tf.meta["tokenizer_checksum"]
    assert gcae.checksum("enc.") == res.gcae.checksum("enc.")


def test_run_directory_replays_metrics(smoke_runs):
    res, _ = smoke_runs[0]
    assert trainer.replay_metrics(res.run_dir) == res.metrics
    cols, rows = read_rows(res.run_dir / "metrics.csv")
    assert cols == list(res.config.to_flat()) + list(METRIC_COLUMNS)
    assert float(rows[0]["AUC-ROC"]) == res.metrics["AUC-ROC"]


def test_saved_config_reloads_from_elsewhere(smoke_runs, monkeypatch, tmp_path):
    res, _ = smoke_runs[0]
    monkeypatch.chdir(tmp_path)
    load_config(res.run_dir / "config.cfg").validate(check_files=True)


def test_label_one_in_training_split_is_fatal(smoke_config, tmp_path):
    bad = tmp_path / "train_labels.csv"
    write_labels_csv(bad, {("train_000", 0): 0, ("train_000", 3): 1})
    with pytest.raises(ContractError, match="label-1"):
        trainer.run_pipeline(replace(smoke_config, train_labels=str(bad)), tmp_path / "runs")


def test_window_too_long_for_training_data(smoke_config, tmp_path):
    with pytest.raises(ContractError, match="no windows"):
        trainer.run_pipeline(replace(smoke_config, window=64, num_tokens=2), tmp_path)


def test_axes_parse_and_expand_in_name_order():
    axes = trainer.parse_axes(["N=1,2", "C=4,8"])
    assert axes == {"num_tokens": (1, 2), "channels": (4, 8)}
    assert trainer.expand_grid(axes) == [
        {"channels": 4, "num_tokens": 1}, {"channels": 4, "num_tokens": 2},
        {"channels": 8, "num_tokens": 1}, {"channels": 8, "num_tokens": 2},
    ]


@pytest.fixture(scope="module")
def grid_result(tiny_synth, tmp_path_factory):
    from conftest import SMOKE_OVERRIDES
    base = replace(load_config(tiny_synth.config), **SMOKE_OVERRIDES)
    base = replace(base, window=12, gcae_epochs=1, tf_epochs=1, hidden=(4,), ff_dim=8)
    out = tmp_path_factory.mktemp("grid")
    axes = trainer.parse_axes(["N=1,2,3,4,5,6,12", "C=4,8"])
    return out, trainer.run_grid(axes, base, out), base


def test_grid_divisors_times_channels_gives_twelve_rows(grid_result):
    out, cells, base = grid_result
    cols, rows = read_rows(out / "grid.csv")
    assert len(rows) == 12
    assert set(cols) == set(base.to_flat()) | set(METRIC_COLUMNS)
    assert {(r["num_tokens"], r["channels"]) for r in rows} == {
        (str(n), str(c)) for n in (1, 2, 3, 4, 6, 12) for c in (4, 8)}


def test_infeasible_grid_cell_skipped_with_reason(grid_result):
    out, cells, _ = grid_result
    skipped = [c for c in cells if c.status == "skipped"]
    assert len(skipped) == 2 and all(c.overrides["num_tokens"] == 5 for c in skipped)
    assert all("N does not divide n" in c.reason for c in skipped)
    _, log_rows = read_rows(out / "grid_log.csv")
    assert len(log_rows) == 14
    assert sum(r["status"] == "skipped" for r in log_rows) == 2


def test_grid_isolates_failing_cells(smoke_config, tmp_path, monkeypatch):
    real = trainer.run_pipeline

    def flaky(cfg, out_root):
        if cfg.channels == 8:
            raise RuntimeError("boom")
        return real(cfg, out_root)

    monkeypatch.setattr(trainer, "run_pipeline", flaky)
    cfg = replace(smoke_config, gcae_epochs=1, tf_epochs=1)
    cells = trainer.run_grid({"channels": (4, 8)}, cfg, tmp_path)
    assert [c.status for c in cells] == ["ok", "failed"]
    assert "boom" in cells[1].reason
    _, rows = read_rows(tmp_path / "grid.csv")
    assert len(rows) == 1
