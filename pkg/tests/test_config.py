"""Unit tests for configuration dataclasses and presets."""

import json

import numpy as np
import pytest

from dualpath_aec.config import (
    PRESETS,
    AecConfig,
    ModelConfig,
    PostNetConfig,
    RunConfig,
    StftConfig,
    preset,
    resolve_config,
    with_model,
)
from dualpath_aec.errors import ConfigError


def test_stft_defaults(stft_cfg):
    """Test default framing: 161 bins at 100 frames per second."""
    assert stft_cfg.num_bins == 161
    assert stft_cfg.frame_rate == 100.0
    assert stft_cfg.window.shape == (320,)
    assert stft_cfg.window[0] > 0


def test_stft_window_is_cola(stft_cfg):
    """Test the squared window overlap-adds to one at 50% overlap."""
    w2 = stft_cfg.window**2
    np.testing.assert_allclose(w2[:160] + w2[160:], 1.0, atol=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"hop": 0},
        {"fft_size": 256},
        {"hop": 150},
    ],
)
def test_stft_invalid(kwargs):
    """Test invalid framing is rejected."""
    with pytest.raises(ConfigError):
        StftConfig(**kwargs)


def test_aec_invalid():
    """Test AEC settings are validated."""
    with pytest.raises(ConfigError):
        AecConfig(taps=0)
    with pytest.raises(ConfigError):
        AecConfig(smoothing=1.0)
    with pytest.raises(ConfigError):
        AecConfig(obs_noise_floor=0.0)


def test_postnet_hidden_must_match_bands():
    """Test the GRU width must equal the band count."""
    with pytest.raises(ConfigError, match="gru_hidden"):
        PostNetConfig(bands=40, gru_hidden=80)


def test_model_defaults():
    """Test default model hyperparameters."""
    cfg = ModelConfig()
    assert cfg.num_signals == 3
    assert cfg.feature_dim == 48
    assert cfg.kernel == (3, 3)
    assert cfg.num_bands(161) == 161
    assert not cfg.is_fixed and not cfg.is_trainable


@pytest.mark.parametrize(
    "kwargs",
    [
        {"freq_ratio": 3, "freq_method": "trainable_mel"},
        {"time_ratio": 64},
        {"freq_method": "none", "freq_ratio": 2},
        {"freq_method": "fixed_erb", "freq_ratio": 2, "time_ratio": 2},
        {"freq_method": "bark"},
        {"feature_dim": 50, "heads": 4},
        {"kernel": (3, 2)},
        {"gru_count": 5},
    ],
)
def test_model_invalid(kwargs):
    """Test unsupported model combinations raise ConfigError."""
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


def test_num_bands_with_compression():
    """Test band counts inside the compressed region."""
    fixed = ModelConfig(freq_method="fixed_mel", freq_ratio=2)
    assert fixed.num_bands(161) == 80
    assert (
        ModelConfig(freq_method="trainable_mel", freq_ratio=32).num_bands(161)
        == 5
    )


def test_run_config_round_trip(tmp_path):
    """Test RunConfig survives save and load."""
    config = preset("dualpath-2x4")
    path = tmp_path / "config.json"
    config.save(path)
    loaded = RunConfig.load(path)
    assert loaded == config
    assert json.loads(path.read_text())["schema_version"] == 1


def test_run_config_partial_sections():
    """Test missing sections take defaults."""
    config = RunConfig.from_dict({"freq": {"method": "fixed_erb", "ratio": 4}})
    assert config.model.freq_method == "fixed_erb"
    assert config.model.freq_ratio == 4
    assert config.stft == StftConfig()
    assert config.aec == AecConfig()


@pytest.mark.parametrize(
    "data",
    [
        {"unknown": 1},
        {"model": {"depth": 3}},
        {"stft": {"rate": 8000}},
        {"postnet": {"enabled": True, "layers": 2}},
        {"schema_version": 2},
        {"model": []},
        [],
    ],
)
def test_run_config_rejects(data):
    """Test unknown keys and bad schema versions raise ConfigError."""
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_run_config_invalid_json(tmp_path):
    """Test malformed JSON raises ConfigError naming the file."""
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="broken.json"):
        RunConfig.load(path)


def test_run_config_missing_file(tmp_path):
    """Test a missing config file raises FileNotFoundError."""
    with pytest.raises(FileNotFoundError, match="missing.json"):
        RunConfig.load(tmp_path / "missing.json")


def test_presets_cover_families():
    """Test every compression family is available as a preset."""
    assert "uncompressed" in PRESETS
    for name in (
        "fixed-erb-2",
        "fixed-mel-32",
        "trainmel-4",
        "skippred-8",
        "skippred-8-postnet",
        "dualpath-2x2",
        "dualpath-4x8",
    ):
        assert name in PRESETS
    assert "dualpath-8x8" not in PRESETS


def test_preset_contents():
    """Test presets map to the expected model settings."""
    fixed = preset("fixed-erb-4").model
    assert (fixed.freq_method, fixed.freq_ratio, fixed.time_ratio) == (
        "fixed_erb",
        4,
        1,
    )
    skip = preset("skippred-2-postnet").model
    assert skip.time_ratio == 2 and skip.postnet_enabled
    assert skip.freq_method == "none"
    dual = preset("dualpath-4x2").model
    assert dual.time_ratio == 4 and dual.freq_ratio == 2
    assert dual.freq_method == "trainable_mel" and dual.postnet_enabled


def test_unknown_preset():
    """Test unknown preset names raise ConfigError."""
    with pytest.raises(ConfigError):
        preset("trainmel-3")
    with pytest.raises(ConfigError):
        preset("resnet")


def test_resolve_config(tmp_path):
    """Test resolution of file paths and preset names."""
    path = tmp_path / "c.json"
    preset("trainmel-2").save(path)
    assert resolve_config(path) == preset("trainmel-2")
    assert resolve_config("skippred-4") == preset("skippred-4")
    with pytest.raises(FileNotFoundError):
        resolve_config(tmp_path / "nope.json")


def test_with_model():
    """Test replacing model fields keeps the rest of the config."""
    config = with_model(preset("trainmel-2"), postnet_enabled=True)
    assert config.model.postnet_enabled
    assert config.model.freq_ratio == 2
    assert config.stft == StftConfig()
