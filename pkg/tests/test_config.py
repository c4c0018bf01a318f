from pathlib import Path

import pytest

from shopformer.config import ExperimentConfig, load_config, parse_value, save_config
from shopformer.errors import ConfigError


def test_defaults_are_the_selected_model():
    cfg = ExperimentConfig()
    assert (cfg.num_tokens, cfg.token_width, cfg.layers, cfg.heads, cfg.ff_dim) == (2, 144, 2, 2, 64)
    assert cfg.gcae_lr == cfg.tf_lr == 5e-5 and cfg.gcae_epochs == cfg.tf_epochs == 20
    assert cfg.tf_dropout == 0.1 and cfg.window == 12 and cfg.num_nodes == 18


def test_file_aliases_comments_and_relative_paths(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "exp.cfg"
    p.write_text("# experiment\nN = 3\nC=4   # channels\n\ntrain_poses = data/train.csv\nnormalize = off\n"
                 "bones = 0-1, 1-2\nkeypoints = 0,5,9\n")
    cfg = load_config(p)
    assert cfg.num_tokens == 3 and cfg.channels == 4 and cfg.normalize is False
    assert cfg.train_poses == str(tmp_path / "sub" / "data" / "train.csv")
    assert cfg.bones == ((0, 1), (1, 2)) and cfg.keypoints == (0, 5, 9)


def test_overrides_apply_after_file(tmp_path):
    p = tmp_path / "e.cfg"
    p.write_text("N = 3\nseed = 4\n")
    cfg = load_config(p, ["N=6", "L = 1"], seed=9)
    assert (cfg.num_tokens, cfg.layers, cfg.seed) == (6, 1, 9)


@pytest.mark.parametrize("text, match", [
    ("bogus = 1\n", "unknown config key"),
    ("N = two\n", "bad value"),
    ("just a line\n", "expected 'key = value'"),
])
def test_malformed_files(tmp_path, text, match):
    p = tmp_path / "e.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_token_count_must_divide_window():
    with pytest.raises(ConfigError, match=r"N does not divide n \(N=5, n=12\)"):
        ExperimentConfig(num_tokens=5).validate()


def test_heads_must_divide_token_width():
    with pytest.raises(ConfigError, match="T does not divide C\\*V"):
        ExperimentConfig(heads=5).validate()


@pytest.mark.parametrize("kw", [{"stride": 0}, {"adapter": "xml"}, {"tf_epochs": 0}, {"target_fpr": 1.0},
                                {"overlap": "median"}, {"kernel": 4}])
def test_other_invalid_values(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw).validate()


def test_referenced_files_must_exist(tmp_path):
    cfg = ExperimentConfig(train_poses=str(tmp_path / "a.csv"), test_poses=str(tmp_path / "b.csv"),
                           test_labels=str(tmp_path / "c.csv"))
    cfg.validate()
    with pytest.raises(ConfigError, match="does not exist"):
        cfg.validate(check_files=True)
    with pytest.raises(ConfigError, match="not set"):
        ExperimentConfig().validate(check_files=True)


def test_save_and_reload_round_trip(tmp_path):
    cfg = ExperimentConfig(num_tokens=3, hidden=(5, 7), bones=((0, 1),), keypoints=(0, 1), num_nodes=2,
                           normalize=False, tf_lr=1e-3, train_poses="/abs/x.csv")
    p = tmp_path / "c.cfg"
    save_config(cfg, p)
    assert load_config(p) == cfg
    assert load_config(p).config_hash() == cfg.config_hash()


def test_hash_changes_with_any_value():
    a = ExperimentConfig()
    assert a.config_hash() == ExperimentConfig().config_hash()
    assert a.config_hash() != ExperimentConfig(seed=1).config_hash()
    assert len(a.config_hash()) == 12


def test_flat_view_lists_every_field_once():
    flat = ExperimentConfig().to_flat()
    assert flat["hidden"] == "32, 64" and flat["normalize"] == "true"
    assert len(flat) == len(set(flat))


def test_parse_value_types():
    assert parse_value("normalize", "Yes") is True
    assert parse_value("hidden", "4, 8,") == (4, 8)
    assert parse_value("gcae_lr", "1e-3") == 1e-3
    with pytest.raises(ConfigError):
        parse_value("normalize", "maybe")


def test_derived_model_configs():
    cfg = ExperimentConfig(channels=4, layers=1, keypoints=(), bones=())
    g, t = cfg.gcae_config(), cfg.transformer_config()
    assert g.token_width == 72 and t.d_model == 72 and t.layers == 1
    assert g.keypoints is None and g.bones is None
    assert cfg.gcae_train().batch_size == cfg.gcae_batch_size
    assert Path(cfg.dumps().splitlines()[0].split(" = ")[0]).name == "adapter"
