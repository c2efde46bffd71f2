"""
Frequency-axis compression.

Two families share one band partition:

* fixed triangle filterbanks on the ERB or Mel scale, applied to spectral
  magnitudes and inverted with the Moore-Penrose pseudoinverse;
* trainable per-band linear maps that embed the stacked real/imaginary
  planes of a band into the feature dimension and back.
"""

import json
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from .dsp import LOG_EPS, SpecLike, as_array
from .errors import ShapeError
from .log import get_logger

logger = get_logger(__name__)

SCALES = ("erb", "mel")


def hz_to_mel(hz: Union[float, np.ndarray]) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: Union[float, np.ndarray]) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1)


def hz_to_erb_rate(hz: Union[float, np.ndarray]) -> np.ndarray:
    """ERB-rate in the Moore & Glasberg (1983) polynomial-fit form."""
    khz = np.asarray(hz, dtype=np.float64) / 1000.0
    return 11.17 * np.log((khz + 0.312) / (khz + 14.675)) + 43.0


def erb_rate_to_hz(rate: Union[float, np.ndarray]) -> np.ndarray:
    r = np.exp((np.asarray(rate, dtype=np.float64) - 43.0) / 11.17)
    return 1000.0 * (0.312 - 14.675 * r) / (r - 1.0)


_SCALE_FNS = {
    "mel": (hz_to_mel, mel_to_hz),
    "erb": (hz_to_erb_rate, erb_rate_to_hz),
}


@dataclass(frozen=True)
class BandLayout:
    """Partition of ``[0, num_bins)`` into contiguous bands."""

    scale: str
    num_bins: int
    low: Tuple[int, ...]
    high: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.scale not in SCALES:
            raise ValueError(f"unknown band scale {self.scale!r}")
        if len(self.low) != len(self.high) or not self.low:
            raise ShapeError("band layout needs matching low/high lists")
        if self.low[0] != 0 or self.high[-1] != self.num_bins:
            raise ShapeError("band layout must cover [0, num_bins)")
        for b, (lo, hi) in enumerate(zip(self.low, self.high)):
            if lo >= hi:
                raise ShapeError(f"band {b} is empty: [{lo}, {hi})")
            if b and lo != self.high[b - 1]:
                raise ShapeError(f"band {b} does not start where {b - 1} ends")

    @property
    def num_bands(self) -> int:
        return len(self.low)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.high) - np.asarray(self.low)

    @property
    def centers(self) -> np.ndarray:
        return (np.asarray(self.low) + np.asarray(self.high) - 1) / 2.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scale": self.scale,
            "num_bins": self.num_bins,
            "num_bands": self.num_bands,
            "low": list(self.low),
            "high": list(self.high),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BandLayout":
        layout = cls(
            scale=data["scale"],
            num_bins=int(data["num_bins"]),
            low=tuple(int(v) for v in data["low"]),
            high=tuple(int(v) for v in data["high"]),
        )
        if "num_bands" in data and data["num_bands"] != layout.num_bands:
            raise ShapeError("num_bands disagrees with low/high lists")
        return layout


def build_band_layout(
    scale: str, num_bins: int, num_bands: int, sample_rate: int = 16000
) -> BandLayout:
    """
    Split ``num_bins`` bins into bands equally spaced on a perceptual scale.

    Boundaries are ``num_bands + 1`` points equally spaced on the scale from
    0 Hz to Nyquist, rounded to bin edges. Collapsed boundaries are advanced
    by one bin, and the resulting widths are sorted so they never shrink
    with frequency.

    Args:
        scale: ``"mel"`` or ``"erb"``.
        num_bins: Bins F of the spectrum.
        num_bands: Bands B, ``1 <= B <= F``.
        sample_rate: Sampling rate; the top boundary is its Nyquist.

    Raises:
        ShapeError: If ``B > F`` or ``B < 1``.
    """
    if scale not in _SCALE_FNS:
        raise ValueError(f"unknown band scale {scale!r}")
    if not 1 <= num_bands <= num_bins:
        raise ShapeError(
            f"need 1 <= bands <= bins, got {num_bands} bands for "
            f"{num_bins} bins"
        )
    to_scale, from_scale = _SCALE_FNS[scale]
    nyquist = sample_rate / 2.0
    points = np.linspace(to_scale(0.0), to_scale(nyquist), num_bands + 1)
    hz = np.clip(from_scale(points), 0.0, nyquist)
    edges = np.round(hz / nyquist * num_bins).astype(int)
    edges[0], edges[-1] = 0, num_bins
    for i in range(1, num_bands):
        edges[i] = max(edges[i], edges[i - 1] + 1)
        edges[i] = min(edges[i], num_bins - (num_bands - i))

    widths = np.sort(np.diff(edges))
    edges = np.concatenate([[0], np.cumsum(widths)])
    return BandLayout(
        scale=scale,
        num_bins=num_bins,
        low=tuple(int(v) for v in edges[:-1]),
        high=tuple(int(v) for v in edges[1:]),
    )


@dataclass(frozen=True)
class FixedFilterBank:
    """Triangle weights ``W [B, F]`` and their pseudoinverse ``[F, B]``."""

    layout: BandLayout
    weights: np.ndarray
    pinv: np.ndarray
    normalized: bool = False

    @property
    def num_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def num_bins(self) -> int:
        return self.weights.shape[1]

    @property
    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-band ``[low, high)`` bin range where the weight is nonzero."""
        nonzero = self.weights > 0
        low = nonzero.argmax(axis=1)
        high = self.num_bins - nonzero[:, ::-1].argmax(axis=1)
        return low, high


def triangle_weights(layout: BandLayout) -> np.ndarray:
    """
    Triangles peaking at each band centre and reaching zero at the
    neighbouring centres. The outermost bands stay flat towards the edges.
    """
    centers = layout.centers
    bins = np.arange(layout.num_bins, dtype=np.float64)
    weights = np.zeros((layout.num_bands, layout.num_bins))
    last = layout.num_bands - 1
    for b, c in enumerate(centers):
        if b == 0:
            rising = (bins <= c).astype(np.float64)
        else:
            left = centers[b - 1]
            rising = np.clip((bins - left) / (c - left), 0.0, 1.0)
        if b == last:
            falling = (bins >= c).astype(np.float64)
        else:
            right = centers[b + 1]
            falling = np.clip((right - bins) / (right - c), 0.0, 1.0)
        weights[b] = np.where(bins <= c, rising, falling)
    return weights


def build_fixed_filterbank(
    scale: str,
    num_bins: int,
    num_bands: int,
    normalize: bool = False,
    sample_rate: int = 16000,
) -> FixedFilterBank:
    """Triangle filterbank over :func:`build_band_layout` bands."""
    layout = build_band_layout(scale, num_bins, num_bands, sample_rate)
    weights = triangle_weights(layout)
    if normalize:
        weights = weights / weights.sum(axis=1, keepdims=True)
    if num_bands == num_bins and np.array_equal(weights, np.eye(num_bins)):
        pinv = np.eye(num_bins)
    else:
        pinv = np.linalg.pinv(weights)
    logger.debug(
        "%s filterbank: %d bins -> %d bands", scale, num_bins, num_bands
    )
    return FixedFilterBank(layout, weights, pinv, normalized=normalize)


def fixed_compress(
    spec: SpecLike, fb: FixedFilterBank, eps: float = LOG_EPS
) -> np.ndarray:
    """``Z[c, t, b] = log(eps + sum_f |X[c, t, f]| W[b, f])``."""
    data = as_array(spec)
    if data.shape[-1] != fb.num_bins:
        raise ShapeError(
            f"spectrum has {data.shape[-1]} bins, filterbank expects "
            f"{fb.num_bins}"
        )
    return np.log(eps + np.abs(data) @ fb.weights.T)


def fixed_decompress(feat: np.ndarray, fb: FixedFilterBank) -> np.ndarray:
    """Map band features ``[..., B]`` to bins ``[..., F]`` with the pinv."""
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape[-1] != fb.num_bands:
        raise ShapeError(
            f"features have {feat.shape[-1]} bands, filterbank has "
            f"{fb.num_bands}"
        )
    return feat @ fb.pinv.T


class TrainableBandTransform(nn.Module):
    """
    Per-band linear compression and optional decompression.

    Band ``b`` flattens its ``width * in_channels`` inputs bin-major, then
    channel, and maps them to ``feature_dim`` values. Decompression maps
    ``feature_dim`` values back to ``width * out_channels`` values in the
    same order.
    """

    def __init__(
        self,
        layout: BandLayout,
        in_channels: int,
        feature_dim: int,
        out_channels: Optional[int] = None,
    ):
        super().__init__()
        self.layout = layout
        self.in_channels = in_channels
        self.feature_dim = feature_dim
        self.out_channels = out_channels
        widths = [int(w) for w in layout.widths]
        self.enc = nn.ModuleList(
            nn.Linear(w * in_channels, feature_dim) for w in widths
        )
        self.dec: Optional[nn.ModuleList] = None
        if out_channels is not None:
            self.dec = nn.ModuleList(
                nn.Linear(feature_dim, w * out_channels) for w in widths
            )

    def compress(self, x: torch.Tensor) -> torch.Tensor:
        """``[N, D, T, F]`` -> ``[N, E, T, B]``."""
        bins = self.layout.num_bins
        if x.shape[1] != self.in_channels or x.shape[-1] != bins:
            raise ShapeError(
                f"expected [N, {self.in_channels}, T, "
                f"{self.layout.num_bins}], got {list(x.shape)}"
            )
        n, _, t, _ = x.shape
        bands = []
        for fc, lo, hi in zip(self.enc, self.layout.low, self.layout.high):
            chunk = x[..., lo:hi].permute(0, 2, 3, 1).reshape(n, t, -1)
            bands.append(fc(chunk))
        return torch.stack(bands, dim=-1).permute(0, 2, 1, 3)

    def decompress(self, feat: torch.Tensor) -> torch.Tensor:
        """``[N, E, T, B]`` -> ``[N, out_channels, T, F]``."""
        if self.dec is None:
            raise ShapeError("transform was built without decompression")
        if feat.shape[1] != self.feature_dim or (
            feat.shape[-1] != self.layout.num_bands
        ):
            raise ShapeError(
                f"expected [N, {self.feature_dim}, T, "
                f"{self.layout.num_bands}], got {list(feat.shape)}"
            )
        n, _, t, _ = feat.shape
        pieces = []
        for b, fc in enumerate(self.dec):
            out = fc(feat[..., b].permute(0, 2, 1))
            out = out.reshape(n, t, -1, self.out_channels)
            pieces.append(out.permute(0, 3, 1, 2))
        return torch.cat(pieces, dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.compress(x)


def stack_real_imag(data: np.ndarray) -> np.ndarray:
    """Complex ``[C, ...]`` -> real ``[2C, ...]``, real parts first."""
    return np.concatenate([data.real, data.imag], axis=0)


def trainable_compress(
    spec: SpecLike, tb: TrainableBandTransform
) -> np.ndarray:
    """Embed each band of a complex map: ``[C, T, F]`` -> ``[E, T, B]``."""
    stacked = stack_real_imag(as_array(spec))
    param = next(tb.parameters())
    with torch.no_grad():
        x = torch.as_tensor(stacked, dtype=param.dtype)[None]
        return tb.compress(x)[0].numpy()


def trainable_decompress(
    feat: np.ndarray, tb: TrainableBandTransform
) -> np.ndarray:
    """Expand band features: ``[E, T, B]`` -> ``[out_channels, T, F]``."""
    param = next(tb.parameters())
    with torch.no_grad():
        x = torch.as_tensor(np.asarray(feat), dtype=param.dtype)[None]
        return tb.decompress(x)[0].numpy()
