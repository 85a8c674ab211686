import json

import pytest

from memstvit.config import PipelineConfig, build_config, load_config_file, parse_band, parse_floats
from memstvit.errors import InputError


def test_defaults():
    cfg = build_config()
    assert cfg.band == (0.75, 3.0) and cfg.alphas == (10.0, 20.0, 40.0)
    assert cfg.train.learning_rate == 5e-5 and cfg.train.batch_size == 32
    assert cfg.vit.hidden_dim == 64 and cfg.vit.dropout_rate == 0.1


@pytest.mark.parametrize("in_file,flag,expect", [
    (None, None, 0.75),
    (0.8, None, 0.8),
    (None, 0.9, 0.9),
    (0.8, 0.9, 0.9),
])
def test_precedence(in_file, flag, expect):
    file_values = {} if in_file is None else {"band.low": in_file}
    overrides = {} if flag is None else {"band.low": flag}
    assert build_config(file_values, overrides).band[0] == expect


def test_nested_file(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"epochs": 7}, "vit": {"hidden_dim": 32}}))
    cfg = build_config(load_config_file(tmp_path / "c.json"))
    assert cfg.train.epochs == 7 and cfg.vit.hidden_dim == 32


def test_dropout_follows_train_key():
    cfg = build_config({"train.dropout_rate": 0.25})
    assert cfg.vit.dropout_rate == 0.25


def test_unknown_key():
    with pytest.raises(InputError, match="unknown"):
        build_config({"band.middle": 1.0})


def test_bad_values():
    with pytest.raises(InputError):
        build_config({"band.low": 3.0, "band.high": 1.0})
    with pytest.raises(InputError):
        build_config({"alphas": [1.0, 2.0]})
    with pytest.raises(InputError):
        PipelineConfig(window_frames=100)


def test_unreadable_file(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(InputError):
        load_config_file(tmp_path / "c.json")


def test_parsers():
    assert parse_band("0.7:4") == (0.7, 4.0)
    assert parse_floats("1,2.5,3") == (1.0, 2.5, 3.0)
    with pytest.raises(InputError):
        parse_band("fast")
    with pytest.raises(InputError):
        parse_floats("1,x")
