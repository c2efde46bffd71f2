"""Unit tests for skip prediction and frame-copy decompression."""

import numpy as np
import pytest
import torch

from dualpath_aec.errors import ConfigError, ShapeError
from dualpath_aec.time_compression import (
    SkipCompressor,
    SkipConfig,
    group_bounds,
    skip_compress,
    skip_decompress,
)


@pytest.mark.parametrize("ratio", [2, 4, 8, 16, 32])
def test_decompress_piecewise_constant(ratio, rng):
    """Test every frame copies its group's compressed feature."""
    frames = 101
    feat = rng.standard_normal((3, -(-frames // ratio), 7))
    out = skip_decompress(feat, ratio, frames)
    assert out.shape == (3, frames, 7)
    for t in range(frames):
        np.testing.assert_array_equal(out[:, t], feat[:, t // ratio])
    for start in range(0, frames, ratio):
        group = out[:, start : start + ratio]
        assert np.all(group == group[:, :1])


def test_decompress_torch():
    """Test tensors are decompressed along the frame axis."""
    feat = torch.arange(6.0).reshape(1, 1, 3, 2)
    out = skip_decompress(feat, 2, 5)
    assert out.shape == (1, 1, 5, 2)
    torch.testing.assert_close(out[0, 0, 4], feat[0, 0, 2])
    torch.testing.assert_close(out[0, 0, 1], feat[0, 0, 0])


def test_decompress_inconsistent_count():
    """Test a frame count the features cannot cover raises ShapeError."""
    with pytest.raises(ShapeError):
        skip_decompress(np.zeros((1, 3, 4)), 4, 20)


def test_config():
    """Test group sizes and compressed frame counts."""
    cfg = SkipConfig(4, 6, 48)
    assert cfg.stack_len == 4
    assert cfg.compressed_frames(10) == 3
    assert cfg.compressed_frames(8) == 2
    with pytest.raises(ConfigError):
        SkipConfig(3, 6, 48)


def test_group_bounds():
    """Test the input frames feeding one compressed frame."""
    assert group_bounds(3, 4) == (9, 12)
    assert group_bounds(0, 2) == (-1, 0)


def test_compressor_matches_stacked_matrix():
    """Test the convolution equals the stacked linear map over history."""
    torch.manual_seed(0)
    r, d, e = 2, 3, 5
    comp = SkipCompressor(SkipConfig(r, d, e)).double()
    x = torch.randn(1, d, 7, 4, dtype=torch.float64)
    out = comp(x)
    assert out.shape == (1, e, 4, 4)
    m = comp.compress_matrix
    padded = torch.cat([torch.zeros(1, d, r - 1, 4, dtype=x.dtype), x], 2)
    for tc in range(4):
        first, _ = group_bounds(tc, r)
        stacked = padded[0, :, first + r - 1 : first + 2 * r - 1, 1]
        vec = stacked.T.reshape(-1)  # [j * D + d], j = 0 oldest
        expected = vec @ m + comp.conv.bias
        torch.testing.assert_close(out[0, :, tc, 1], expected)


def test_stream_matches_offline():
    """Test the ring buffer reproduces the offline compression."""
    torch.manual_seed(1)
    r = 4
    comp = SkipCompressor(SkipConfig(r, 6, 8)).double()
    x = torch.randn(1, 6, 13, 5, dtype=torch.float64)
    offline = comp(x)
    stream = comp.stream()
    produced = []
    for t in range(13):
        out = stream.push(x[:, :, t])
        if t % r == 0:
            assert out is not None
            produced.append(out)
        else:
            assert out is None
    torch.testing.assert_close(torch.cat(produced, dim=2), offline)


def test_skip_compress_array(rng):
    """Test the array wrapper."""
    comp = SkipCompressor(SkipConfig(8, 2, 3)).double()
    out = skip_compress(rng.standard_normal((2, 20, 4)), comp)
    assert out.shape == (3, 3, 4)
    with pytest.raises(ShapeError):
        comp(torch.zeros(1, 5, 8, 4, dtype=torch.float64))
