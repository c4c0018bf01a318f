import numpy as np

from shopformer.pose_data import load_csv
from shopformer.synth import SynthParams, generate, walking_track, write_synth


def test_fixed_seed_is_byte_identical(tmp_path):
    p = SynthParams(normal_train=3, normal_test=1, anomalous_test=2, frames=20, seed=5)
    a, b = write_synth(tmp_path / "a", p), write_synth(tmp_path / "b", p)
    for name in ("train_poses", "train_labels", "test_poses", "test_labels", "config"):
        assert getattr(a, name).read_bytes() == getattr(b, name).read_bytes()
    c = write_synth(tmp_path / "c", SynthParams(normal_train=3, normal_test=1, anomalous_test=2, frames=20, seed=6))
    assert a.test_poses.read_bytes() != c.test_poses.read_bytes()


def test_no_anomalous_tracks_means_all_zero_labels():
    splits = generate(SynthParams(normal_train=2, normal_test=3, anomalous_test=0, frames=12))
    assert set(splits["test"][1].values()) == {0}


def test_train_split_is_normal_only_and_spans_are_contiguous():
    splits = generate(SynthParams(normal_train=4, normal_test=2, anomalous_test=5, frames=30, seed=2))
    assert set(splits["train"][1].values()) == {0}
    for i in range(5):
        ys = [splits["test"][1][(f"test_anomaly_{i:03d}", t)] for t in range(30)]
        ones = np.flatnonzero(ys)
        assert 10 <= len(ones) <= 15 and np.all(np.diff(ones) == 1)


def test_generated_files_pass_validation(tmp_path):
    files = write_synth(tmp_path, SynthParams(normal_train=2, normal_test=1, anomalous_test=1, frames=14))
    for poses, labels in ((files.train_poses, files.train_labels), (files.test_poses, files.test_labels)):
        ds = load_csv(poses, labels)
        assert not ds.errors and len(ds.frames) == len(ds.labels)
    text = files.config.read_text()
    assert "train_poses = train_poses.csv" in text and "seed = 0" in text


def test_anomalous_span_moves_the_wrists():
    rng_a, rng_b = np.random.default_rng(0), np.random.default_rng(0)
    normal = walking_track(rng_a, 20, None, noise=0.0)
    odd = walking_track(rng_b, 20, (5, 15), noise=0.0)
    assert np.abs(odd[5:15, 9:11] - normal[5:15, 9:11]).mean() > 10.0
    assert np.all(np.isfinite(odd))
