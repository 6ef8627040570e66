import json

import pytest

from toylm.config import HarnessConfig, load_config


def test_defaults_and_activation_fallback():
    cfg = HarnessConfig(corpus_path="x.txt", total_tokens=1_000_000)
    assert cfg.weighting == "default"
    assert cfg.weighting_activation_tokens == 300_000  # 30% of the schedule
    assert cfg.tokens_per_step == cfg.batch_size * cfg.seq_len


def test_explicit_activation_kept():
    cfg = HarnessConfig(corpus_path="x.txt", total_tokens=1_000_000,
                        weighting_activation_tokens=123)
    assert cfg.weighting_activation_tokens == 123


def test_load_round_trip(tmp_path):
    raw = {"corpus_path": "c.txt", "seq_len": 64, "batch_size": 4,
           "total_tokens": 50_000, "warmup_tokens": 1_000,
           "checkpoint_interval": 5_000, "weighting": "head_suppression",
           "seed": 9}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    cfg = load_config(path)
    assert cfg.weighting == "head_suppression"
    assert cfg.seq_len == 64
    assert cfg.seed == 9


@pytest.mark.parametrize("overrides", [
    {"weighting": "bogus"},
    {"seq_len": 1},
    {"total_tokens": 0},
    {"warmup_tokens": 10**9},
    {"d_model": 65},
])
def test_invalid_configs(overrides):
    base = {"corpus_path": "x.txt"}
    base.update(overrides)
    with pytest.raises(ValueError):
        HarnessConfig(**base)
