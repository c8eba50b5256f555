import pytest

from fetcm import config as C
from fetcm.model import ModelConfig
from fetcm.training import TrainConfig


def test_empty_file_gives_table_defaults():
    cfg = C.parse_config("# nothing here\n\n")
    assert cfg.model == ModelConfig() and cfg.train == TrainConfig()
    assert (cfg.model.embedding_size, cfg.model.hidden_size, cfg.model.heads, cfg.model.transformer_blocks) == (64, 64, 8, 1)
    assert (cfg.model.dropout, cfg.train.learning_rate, cfg.train.batch_size, cfg.train.weight_decay) == (0.5, 0.001, 64, 1e-5)


def test_typed_values_and_comments():
    cfg = C.parse_config("heads = 4  # fewer heads\nlearning_rate=0.01\nenable_filter_exam = false\n"
                         "data_path = /tmp/x.jsonl\ncombination = mul\n")
    assert cfg.model.heads == 4 and cfg.train.learning_rate == 0.01
    assert cfg.model.enable_filter_exam is False and cfg.model.combination == "mul"
    assert cfg.data.data_path == "/tmp/x.jsonl"


@pytest.mark.parametrize("text,needle", [("hedas = 4", "hedas"), ("heads = four", "heads"),
                                         ("just words", "line 1"), ("dropout = 0.1\nbaseline = maybe", "line 2")])
def test_strict_parsing(text, needle):
    with pytest.raises(C.ConfigError, match=needle):
        C.parse_config(text)


def test_every_key_is_documented():
    text = C.describe_keys()
    for key in C.KEYS:
        assert f"  {key} = " in text


def test_data_helpers():
    d = C.DataOptions()
    assert d.ratios() == (0.8, 0.1, 0.1)
    g = d.gamma_values()
    assert len(g) == 10 and g[0] == 1.0 and g[-1] == 0.1 and g[4] == 0.6
    d.gamma = "1,0.5"
    assert d.gamma_values() == [1.0, 0.5]
    d.split_ratios = "0.5,0.5"
    with pytest.raises(C.ConfigError):
        d.ratios()
