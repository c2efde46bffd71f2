"""Unit tests for the weight container and initialization."""

import struct

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dualpath_aec.config import PRESETS, RunConfig, preset
from dualpath_aec.errors import WeightsFormatError, WeightsMismatchError
from dualpath_aec.model import build_model
from dualpath_aec.profiler import count
from dualpath_aec.weights import (
    WeightContainer,
    container_name,
    expected_shapes,
    from_module,
    init_weights,
    load_into,
    validate,
)

_names = st.text(
    alphabet=st.characters(min_codepoint=33, max_codepoint=0x2FF),
    min_size=1,
    max_size=12,
)
_tensors = hnp.arrays(
    dtype=np.float32,
    shape=hnp.array_shapes(min_dims=1, max_dims=3, max_side=5),
    elements=st.floats(allow_nan=False, allow_infinity=False, width=32),
)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(_names, _tensors, max_size=4))
def test_round_trip(tensors):
    """Test bytes written by a container parse back identically."""
    container = WeightContainer(tensors)
    restored = WeightContainer.from_bytes(container.to_bytes())
    assert restored == container
    assert list(restored) == list(tensors)


def _one_tensor():
    tensor = np.arange(6, dtype=np.float32).reshape(2, 3)
    return WeightContainer({"a.w": tensor})


def test_header_layout():
    """Test the fixed header and first tensor record."""
    data = _one_tensor().to_bytes()
    assert data[:4] == b"DPCW"
    assert struct.unpack("<II", data[4:12]) == (1, 1)
    assert struct.unpack("<H", data[12:14]) == (3,)
    assert data[14:17] == b"a.w"
    assert data[17:19] == bytes([0, 2])
    assert struct.unpack("<II", data[19:27]) == (2, 3)
    assert len(data) == 27 + 6 * 4


def test_malformed_containers():
    """Test malformed bytes raise WeightsFormatError."""
    data = _one_tensor().to_bytes()
    with pytest.raises(WeightsFormatError, match="bad magic"):
        WeightContainer.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(WeightsFormatError, match="truncated tensor"):
        WeightContainer.from_bytes(data[:-4])
    with pytest.raises(WeightsFormatError, match="trailing"):
        WeightContainer.from_bytes(data + b"\0")
    with pytest.raises(WeightsFormatError, match="version"):
        WeightContainer.from_bytes(data[:4] + struct.pack("<I", 2) + data[8:])
    with pytest.raises(WeightsFormatError, match="dtype"):
        WeightContainer.from_bytes(data[:17] + bytes([1]) + data[18:])
    with pytest.raises(WeightsFormatError):
        WeightContainer.from_bytes(data[:6])


def test_duplicate_names():
    """Test two records with the same name are rejected."""
    data = _one_tensor().to_bytes()
    record = data[12:]
    doubled = data[:4] + struct.pack("<II", 1, 2) + record + record
    with pytest.raises(WeightsFormatError, match="duplicate"):
        WeightContainer.from_bytes(doubled)


def test_save_and_load(tmp_path):
    """Test files round trip and are checked against a configuration."""
    weights = init_weights(RunConfig(), seed=2)
    path = tmp_path / "nested" / "model.dpcw"
    weights.save(path)
    assert WeightContainer.load(path, RunConfig()) == weights
    with pytest.raises(WeightsMismatchError):
        WeightContainer.load(path, preset("skippred-2"))
    with pytest.raises(FileNotFoundError):
        WeightContainer.load(tmp_path / "missing.dpcw")
    broken = tmp_path / "broken.dpcw"
    broken.write_bytes(b"DPCW")
    with pytest.raises(WeightsFormatError, match="broken.dpcw"):
        WeightContainer.load(broken)


def test_validate_shapes():
    """Test a tensor of the wrong shape is reported by name."""
    weights = init_weights(RunConfig())
    weights["out.b"] = np.zeros(5)
    with pytest.raises(WeightsMismatchError, match="out.b"):
        validate(weights, RunConfig())


def test_init_is_deterministic():
    """Test the seed fully determines the initialization."""
    a = init_weights(RunConfig(), seed=0)
    b = init_weights(RunConfig(), seed=0)
    c = init_weights(RunConfig(), seed=1)
    assert a == b
    assert a != c
    assert list(a) == list(expected_shapes(RunConfig()))
    assert all(t.dtype == np.float32 for _, t in a.items())


def test_init_constants():
    """Test norm gains, biases and PReLU slopes get constant values."""
    weights = init_weights(preset("skippred-2-postnet"))
    norms = [n for n in weights if ".norm" in n]
    assert norms
    for name in norms:
        expected = 1.0 if name.endswith(".w") else 0.0
        assert np.all(weights[name] == expected)
    assert np.all(weights["postnet.act.w"] == 0.25)
    bound = np.sqrt(1.0 / weights["out.w"].shape[1])
    assert np.all(np.abs(weights["out.w"]) <= bound * (1 + 1e-6))


def test_container_names():
    """Test torch parameter names map to container names."""
    assert container_name("enc.0.dw.weight") == "enc.0.dw.w"
    assert container_name("postnet.gru.weight_hh_l0") == "postnet.gru.w_hh"
    assert container_name("postnet.gru.bias_ih_l0") == "postnet.gru.b_ih"
    assert container_name("weight") == "w"


def test_module_round_trip():
    """Test snapshotting a module and loading it into another."""
    config = preset("trainmel-4")
    source = build_model(config.model, config.stft)
    target = build_model(config.model, config.stft)
    load_into(target, from_module(source))
    for (name, a), (_, b) in zip(
        source.named_parameters(), target.named_parameters()
    ):
        torch.testing.assert_close(a.float(), b.float(), msg=name)
    with pytest.raises(WeightsMismatchError):
        load_into(build_model(RunConfig().model), from_module(source))


@pytest.mark.parametrize("name", PRESETS)
def test_param_count_matches_profiler(name):
    """Test module parameters agree with the analytic count."""
    config = preset(name)
    weights = init_weights(config)
    assert weights.num_params == count(config).params
    net = build_model(config.model, config.stft)
    assert sum(p.numel() for p in net.parameters()) == weights.num_params
