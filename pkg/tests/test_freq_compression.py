"""Unit tests for band layouts, fixed filterbanks and trainable bands."""

import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dualpath_aec.errors import ShapeError
from dualpath_aec.freq_compression import (
    BandLayout,
    TrainableBandTransform,
    build_band_layout,
    build_fixed_filterbank,
    erb_rate_to_hz,
    fixed_compress,
    fixed_decompress,
    hz_to_erb_rate,
    hz_to_mel,
    mel_to_hz,
    stack_real_imag,
    trainable_compress,
    trainable_decompress,
    triangle_weights,
)


def test_scale_conversions():
    """Test Mel and ERB-rate conversions invert each other."""
    hz = np.array([0.0, 100.0, 1000.0, 4000.0, 8000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(hz)), hz, atol=1e-6)
    np.testing.assert_allclose(
        erb_rate_to_hz(hz_to_erb_rate(hz)), hz, atol=1e-6
    )
    assert float(hz_to_mel(1000.0)) == pytest.approx(1000.0, abs=0.1)
    assert np.all(np.diff(hz_to_erb_rate(hz)) > 0)


@settings(max_examples=60, deadline=None)
@given(
    scale=st.sampled_from(["erb", "mel"]),
    num_bands=st.integers(min_value=1, max_value=161),
)
def test_layout_is_partition(scale, num_bands):
    """Test layouts cover every bin exactly once with growing widths."""
    layout = build_band_layout(scale, 161, num_bands)
    assert layout.num_bands == num_bands
    assert layout.low[0] == 0 and layout.high[-1] == 161
    assert np.all(layout.widths >= 1)
    assert int(layout.widths.sum()) == 161
    assert np.all(np.diff(layout.widths) >= 0)


def test_layout_rejects_too_many_bands():
    """Test more bands than bins raises ShapeError."""
    with pytest.raises(ShapeError):
        build_band_layout("mel", 161, 162)
    with pytest.raises(ShapeError):
        build_band_layout("erb", 161, 0)


def test_layout_json_round_trip():
    """Test a layout survives its JSON form."""
    layout = build_band_layout("erb", 161, 20)
    restored = BandLayout.from_dict(json.loads(layout.to_json()))
    assert restored == layout


def test_layout_validation():
    """Test gaps and empty bands are rejected."""
    with pytest.raises(ShapeError):
        BandLayout("mel", 10, (0, 5), (4, 10))
    with pytest.raises(ShapeError):
        BandLayout("mel", 10, (0, 5), (5, 9))
    with pytest.raises(ShapeError):
        BandLayout("mel", 10, (0, 5, 5), (5, 5, 10))


@pytest.mark.parametrize("scale", ["erb", "mel"])
@pytest.mark.parametrize("num_bands", [80, 40, 20, 10, 5])
def test_pseudoinverse_identities(scale, num_bands):
    """Test the Moore-Penrose identities of every fixed bank."""
    bank = build_fixed_filterbank(scale, 161, num_bands)
    w, p = bank.weights, bank.pinv
    assert w.shape == (num_bands, 161)
    assert p.shape == (161, num_bands)
    err1 = np.linalg.norm(w @ p @ w - w) / np.linalg.norm(w)
    err2 = np.linalg.norm(p @ w @ p - p) / np.linalg.norm(p)
    assert err1 <= 1e-5
    assert err2 <= 1e-5


def test_identity_bank():
    """Test one band per bin gives the identity and its inverse."""
    bank = build_fixed_filterbank("mel", 161, 161)
    np.testing.assert_array_equal(bank.weights, np.eye(161))
    np.testing.assert_array_equal(bank.pinv, np.eye(161))


def test_triangle_shape():
    """Test triangles are bounded and cover their own band."""
    layout = build_band_layout("mel", 161, 20)
    weights = triangle_weights(layout)
    assert np.all(weights >= 0) and np.all(weights <= 1)
    assert np.all(weights.max(axis=1) > 0)
    assert np.all(weights.sum(axis=0) > 0)
    bank = build_fixed_filterbank("mel", 161, 20)
    low, high = bank.support
    assert np.all(high - low >= layout.widths)
    assert np.all(low <= np.asarray(layout.low))


def test_normalized_bank():
    """Test normalized rows sum to one."""
    bank = build_fixed_filterbank("erb", 161, 10, normalize=True)
    np.testing.assert_allclose(bank.weights.sum(axis=1), 1.0)
    assert bank.normalized


def test_fixed_compress_formula(rng):
    """Test log band energies and their pseudoinverse expansion."""
    bank = build_fixed_filterbank("mel", 161, 40)
    spec = rng.standard_normal((2, 5, 161)) + 1j * rng.standard_normal(
        (2, 5, 161)
    )
    z = fixed_compress(spec, bank)
    expected = np.log(1e-10 + np.abs(spec) @ bank.weights.T)
    np.testing.assert_allclose(z, expected)
    assert fixed_decompress(z, bank).shape == (2, 5, 161)
    with pytest.raises(ShapeError):
        fixed_compress(spec[..., :160], bank)
    with pytest.raises(ShapeError):
        fixed_decompress(z[..., :39], bank)


def test_trainable_band_order():
    """Test bands flatten bin-major, then channel."""
    layout = build_band_layout("mel", 161, 80)
    tb = TrainableBandTransform(layout, in_channels=3, feature_dim=4)
    tb = tb.double()
    x = torch.randn(2, 3, 5, 161, dtype=torch.float64)
    out = tb.compress(x)
    assert out.shape == (2, 4, 5, 80)
    b = 79
    lo, hi = layout.low[b], layout.high[b]
    flat = x[0, :, 2, lo:hi].T.reshape(-1)  # [(f - lo) * D + d]
    fc = tb.enc[b]
    expected = fc.weight @ flat + fc.bias
    torch.testing.assert_close(out[0, :, 2, b], expected)


def test_trainable_decompress_shape():
    """Test decompression restores every bin."""
    layout = build_band_layout("mel", 161, 40)
    tb = TrainableBandTransform(layout, 6, 8, out_channels=12).double()
    feat = torch.randn(1, 8, 3, 40, dtype=torch.float64)
    assert tb.decompress(feat).shape == (1, 12, 3, 161)
    with pytest.raises(ShapeError):
        tb.decompress(feat[..., :39])
    with pytest.raises(ShapeError):
        tb.compress(torch.randn(1, 5, 3, 161, dtype=torch.float64))


def test_trainable_without_decoder():
    """Test a compress-only transform refuses to decompress."""
    layout = build_band_layout("mel", 161, 10)
    tb = TrainableBandTransform(layout, 2, 1)
    with pytest.raises(ShapeError):
        tb.decompress(torch.zeros(1, 1, 1, 10))


def test_numpy_wrappers(rng):
    """Test array helpers around the trainable transform."""
    layout = build_band_layout("mel", 161, 20)
    tb = TrainableBandTransform(layout, 2, 8, out_channels=4).double()
    spec = rng.standard_normal((1, 6, 161)) + 1j * rng.standard_normal(
        (1, 6, 161)
    )
    stacked = stack_real_imag(spec)
    assert stacked.shape == (2, 6, 161)
    np.testing.assert_array_equal(stacked[1], spec[0].imag)
    feat = trainable_compress(spec, tb)
    assert feat.shape == (8, 6, 20)
    assert trainable_decompress(feat, tb).shape == (4, 6, 161)


def test_trainable_decompress_values(rng):
    """Test decoded bins against a hand computed projection."""
    layout = build_band_layout("erb", 161, 20)
    tb = TrainableBandTransform(layout, 2, 3, out_channels=2).double()
    feat = rng.standard_normal((3, 4, 20))
    out = trainable_decompress(feat, tb)
    for b in (0, 7, 19):
        lo, hi = layout.low[b], layout.high[b]
        fc = tb.dec[b]
        w = fc.weight.detach().numpy()
        bias = fc.bias.detach().numpy()
        for t in range(4):
            proj = (w @ feat[:, t, b] + bias).reshape(hi - lo, 2)
            np.testing.assert_allclose(out[:, t, lo:hi], proj.T)


def test_trainable_bands_are_local():
    """Test each band reads and writes only its own bins."""
    layout = build_band_layout("mel", 161, 16)
    tb = TrainableBandTransform(layout, 2, 4, out_channels=2).double()
    b = 9
    lo, hi = layout.low[b], layout.high[b]
    x = torch.randn(1, 2, 3, 161, dtype=torch.float64)
    bumped = x.clone()
    bumped[..., lo:hi] += 1.0
    with torch.no_grad():
        diff = tb.compress(bumped) - tb.compress(x)
    changed = diff.abs().amax(dim=(0, 1, 2)) > 0
    assert changed.nonzero().flatten().tolist() == [b]

    feat = torch.randn(1, 4, 3, 16, dtype=torch.float64)
    bumped = feat.clone()
    bumped[..., b] += 1.0
    with torch.no_grad():
        diff = tb.decompress(bumped) - tb.decompress(feat)
    changed = diff.abs().amax(dim=(0, 1, 2)) > 0
    assert changed.nonzero().flatten().tolist() == list(range(lo, hi))


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(min_value=-4.0, max_value=4.0),
    b=st.floats(min_value=-4.0, max_value=4.0),
    seed=st.integers(min_value=0, max_value=2**16),
)
def test_trainable_band_superposition(a, b, seed):
    """Test bias-free band transforms are linear in their input."""
    torch.manual_seed(seed)
    layout = build_band_layout("erb", 161, 12)
    tb = TrainableBandTransform(layout, 2, 3, out_channels=2).double()
    with torch.no_grad():
        for fc in [*tb.enc, *tb.dec]:
            fc.bias.zero_()
        x = torch.randn(1, 2, 2, 161, dtype=torch.float64)
        y = torch.randn(1, 2, 2, 161, dtype=torch.float64)
        torch.testing.assert_close(
            tb.compress(a * x + b * y),
            a * tb.compress(x) + b * tb.compress(y),
        )
        u = torch.randn(1, 3, 2, 12, dtype=torch.float64)
        v = torch.randn(1, 3, 2, 12, dtype=torch.float64)
        torch.testing.assert_close(
            tb.decompress(a * u + b * v),
            a * tb.decompress(u) + b * tb.decompress(v),
        )
