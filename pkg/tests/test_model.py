"""Unit tests for the dual-path mask network."""

import numpy as np
import pytest
import torch

from dualpath_aec.config import ModelConfig, StftConfig, preset
from dualpath_aec.dsp import TFMap
from dualpath_aec.errors import NumericError, ShapeError
from dualpath_aec.model import (
    BlockState,
    CausalConvLayer,
    DualPathBlock,
    LinearAttention,
    MaskSet,
    apply_masks_and_sum,
    build_model,
    feature_map,
    masks_from_channels,
    stack_spectra,
)


def _oracle(att, x, causal):
    """Quadratic-time reference of the kernelized attention."""
    q, k, v = att._project(x)
    length = x.shape[1]
    out = torch.zeros_like(v)
    for i in range(length):
        stop = i + 1 if causal else length
        scores = torch.einsum("nhd,nhjd->nhj", q[:, :, i], k[:, :, :stop])
        num = torch.einsum("nhj,nhjd->nhd", scores, v[:, :, :stop])
        den = scores.sum(-1, keepdim=True) + att.eps
        out[:, :, i] = num / den
    return att.norm(x + att.o(att._merge(out)))


@pytest.mark.parametrize("causal", [True, False])
@pytest.mark.parametrize("length", [1, 5, 16])
def test_attention_matches_oracle(causal, length):
    """Test linear attention equals the quadratic oracle."""
    torch.manual_seed(0)
    att = LinearAttention(8, 2, chunk=4).double()
    x = torch.randn(3, length, 8, dtype=torch.float64)
    with torch.no_grad():
        fast = att(x, causal=causal)
        slow = _oracle(att, x, causal)
    assert (fast - slow).abs().max().item() <= 1e-5


def test_attention_step_matches_causal():
    """Test one-element steps reproduce the causal pass."""
    torch.manual_seed(1)
    att = LinearAttention(12, 3, chunk=5).double()
    x = torch.randn(2, 11, 12, dtype=torch.float64)
    with torch.no_grad():
        full = att(x, causal=True)
        state = None
        steps = []
        for i in range(11):
            out, state = att.step(x[:, i : i + 1], state)
            steps.append(out)
    torch.testing.assert_close(torch.cat(steps, dim=1), full)


def test_feature_map_positive():
    """Test the kernel feature map is strictly positive."""
    u = torch.linspace(-30, 30, 101, dtype=torch.float64)
    assert torch.all(feature_map(u) > 0)


def test_causal_conv_step():
    """Test the streaming convolution matches the offline pass."""
    torch.manual_seed(2)
    layer = CausalConvLayer(6, (3, 3)).double().eval()
    x = torch.randn(1, 6, 9, 10, dtype=torch.float64)
    with torch.no_grad():
        full = layer(x)
        history = None
        steps = []
        for t in range(9):
            out, history = layer.step(x[:, :, t : t + 1], history)
            steps.append(out)
    torch.testing.assert_close(torch.cat(steps, dim=2), full)


def test_block_is_causal_in_time():
    """Test a dual-path block never looks at future frames."""
    torch.manual_seed(3)
    block = DualPathBlock(8, 2, use_gru=True, chunk=4).double()
    x = torch.randn(1, 8, 10, 6, dtype=torch.float64)
    y = x.clone()
    y[:, :, 7:] += torch.randn(1, 8, 3, 6, dtype=torch.float64)
    with torch.no_grad():
        a, b = block(x), block(y)
    torch.testing.assert_close(a[:, :, :7], b[:, :, :7])
    assert not torch.allclose(a[:, :, 7:], b[:, :, 7:])


def test_block_step_matches_forward():
    """Test stepping a block frame by frame."""
    torch.manual_seed(4)
    block = DualPathBlock(8, 4, use_gru=True, chunk=3).double()
    x = torch.randn(2, 8, 7, 5, dtype=torch.float64)
    with torch.no_grad():
        full = block(x)
        state = BlockState()
        steps = []
        for t in range(7):
            out, state = block.step(x[:, :, t : t + 1], state)
            steps.append(out)
    torch.testing.assert_close(torch.cat(steps, dim=2), full)


def test_stack_and_masks_from_channels():
    """Test real/imaginary stacking and its inverse."""
    spec = torch.randn(2, 3, 4, 5, dtype=torch.complex128)
    stacked = stack_spectra(spec)
    assert stacked.shape == (2, 6, 4, 5)
    torch.testing.assert_close(masks_from_channels(stacked), spec)


def test_apply_masks_and_sum(rng):
    """Test complex masks are applied per signal and summed."""
    spec = rng.standard_normal((3, 4, 161)) + 1j * rng.standard_normal(
        (3, 4, 161)
    )
    masks = np.zeros((3, 4, 161), complex)
    masks[2] = 1.0
    out = apply_masks_and_sum(spec, MaskSet(masks))
    assert isinstance(out, TFMap)
    np.testing.assert_array_equal(out.data[0], spec[2])
    with pytest.raises(ShapeError):
        apply_masks_and_sum(spec[:2], MaskSet(masks))
    with pytest.raises(NumericError):
        MaskSet(np.full((1, 1, 161), np.inf))


@pytest.mark.parametrize(
    "name",
    [
        "uncompressed",
        "fixed-erb-4",
        "fixed-mel-2",
        "trainmel-4",
        "skippred-4",
        "dualpath-2x4",
    ],
)
def test_mask_shapes(name):
    """Test every family maps spectra to masks of the same shape."""
    config = preset(name)
    net = build_model(config.model, config.stft)
    spec = torch.randn(1, 3, 9, 161, dtype=torch.complex128)
    with torch.no_grad():
        masks = net(spec)
        enhanced = net.enhance_spectrum(spec)
    assert masks.shape == spec.shape
    assert masks.dtype == torch.complex128
    assert enhanced.shape == (1, 9, 161)
    assert torch.all(torch.isfinite(masks.real))


@pytest.mark.parametrize(
    "name", ["uncompressed", "fixed-mel-4", "dualpath-4x4"]
)
def test_stream_matches_forward(name):
    """Test per-frame masks equal the offline masks."""
    torch.manual_seed(5)
    config = preset(name)
    net = build_model(config.model, config.stft)
    spec = torch.randn(1, 3, 11, 161, dtype=torch.complex128)
    with torch.no_grad():
        offline = net.enhance_spectrum(spec)
        stream = net.stream()
        frames = [stream.step(spec[:, :, t]) for t in range(11)]
    torch.testing.assert_close(torch.stack(frames, dim=1), offline)
    assert stream.frames == 11


def test_model_layout():
    """Test the modules each family instantiates."""
    uncompressed = build_model(ModelConfig())
    assert uncompressed.in_layer is not None
    assert uncompressed.skip is None and uncompressed.freq is None
    skip = build_model(preset("skippred-2").model)
    assert skip.in_layer is None and skip.skip is not None
    trainable = build_model(preset("trainmel-2").model)
    assert trainable.freq is not None and trainable.in_layer is None
    assert trainable.out.in_channels == 12
    fixed = build_model(preset("fixed-erb-2").model)
    assert fixed.fixed_weights.shape == (80, 161)
    assert fixed.in_layer.in_channels == 3
    assert build_model(preset("skippred-2-postnet").model).postnet is not None


def test_model_shape_errors():
    """Test wrong signal or bin counts raise ShapeError."""
    net = build_model(ModelConfig(), StftConfig())
    with pytest.raises(ShapeError):
        net(torch.zeros(1, 2, 3, 161, dtype=torch.complex128))
    with pytest.raises(ShapeError):
        net(torch.zeros(1, 3, 3, 160, dtype=torch.complex128))
    skip = build_model(preset("skippred-2").model)
    with pytest.raises(ShapeError):
        skip.input_layer(torch.zeros(1, 6, 1, 161, dtype=torch.float64))
