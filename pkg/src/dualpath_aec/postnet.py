"""Light post-processing network predicting a real mask at full frame rate."""

from typing import Optional, Tuple

import numpy as np
import torch
from torch import nn

from .config import PostNetConfig, StftConfig
from .dsp import LOG_EPS, SpecLike, TFMap, as_array
from .errors import ShapeError
from .freq_compression import TrainableBandTransform, build_band_layout


class BandExpand(nn.Module):
    """Per-band affine map of one hidden unit to ``channels`` values."""

    fan_in = 1

    def __init__(self, bands: int, channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(bands, channels))
        self.bias = nn.Parameter(torch.zeros(bands, channels))

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        """``[M, B]`` -> ``[M, channels, B]``."""
        out = h[..., None] * self.weight + self.bias
        return out.transpose(1, 2)


class PostNet(nn.Module):
    """
    Band compression of two log-power spectra, a 1-layer GRU, per-band
    expansion, two 1x1 convolutions over bands, a linear map to bins and a
    sigmoid.
    """

    def __init__(
        self,
        cfg: Optional[PostNetConfig] = None,
        stft: Optional[StftConfig] = None,
    ):
        super().__init__()
        self.cfg = cfg or PostNetConfig()
        stft = stft or StftConfig()
        self.num_bins = stft.num_bins
        layout = build_band_layout(
            "mel", stft.num_bins, self.cfg.bands, stft.sample_rate
        )
        self.comp = TrainableBandTransform(
            layout, in_channels=2, feature_dim=1
        )
        self.gru = nn.GRU(
            self.cfg.bands, self.cfg.gru_hidden, batch_first=True
        )
        self.expand = BandExpand(self.cfg.bands, self.cfg.channels)
        self.conv1 = nn.Conv1d(self.cfg.channels, self.cfg.hidden, 1)
        self.act = nn.PReLU(self.cfg.hidden)
        self.conv2 = nn.Conv1d(self.cfg.hidden, 1, 1)
        self.proj = nn.Linear(self.cfg.bands, stft.num_bins)

    def mask_logits(
        self,
        e_spec: torch.Tensor,
        s_spec: torch.Tensor,
        hidden: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Pre-sigmoid mask for complex spectra ``[N, T, F]``.

        Returns:
            Logits ``[N, T, F]`` and the GRU state after the last frame.
        """
        if e_spec.shape != s_spec.shape:
            raise ShapeError(
                f"postnet inputs differ: {list(e_spec.shape)} vs "
                f"{list(s_spec.shape)}"
            )
        feat = torch.stack(
            [
                torch.log(e_spec.abs() ** 2 + LOG_EPS),
                torch.log(s_spec.abs() ** 2 + LOG_EPS),
            ],
            dim=1,
        )
        z = self.comp.compress(feat)[:, 0]  # [N, T, B]
        g, hidden = self.gru(z, hidden)
        n, t, b = g.shape
        u = self.expand(g.reshape(n * t, b))
        u = self.conv2(self.act(self.conv1(u)))
        logits = self.proj(u[:, 0]).reshape(n, t, -1)
        return logits, hidden

    def forward(
        self,
        e_spec: torch.Tensor,
        s_spec: torch.Tensor,
        hidden: Optional[torch.Tensor] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        logits, hidden = self.mask_logits(e_spec, s_spec, hidden)
        return torch.sigmoid(logits) * s_spec, hidden


def postnet_forward(
    e_spec: SpecLike, s_spec: SpecLike, net: PostNet
) -> TFMap:
    """Apply a PostNet to single-signal maps ``[1, T, F]``."""
    e = as_array(e_spec)
    s = as_array(s_spec)
    if e.shape != s.shape:
        raise ShapeError(f"postnet inputs differ: {e.shape} vs {s.shape}")
    if e.shape[-1] != net.num_bins:
        raise ShapeError(
            f"postnet expects {net.num_bins} bins, got {e.shape[-1]}"
        )
    dtype = net.proj.weight.dtype
    cdtype = torch.complex128 if dtype == torch.float64 else torch.complex64
    with torch.no_grad():
        out, _ = net(
            torch.as_tensor(e, dtype=cdtype), torch.as_tensor(s, dtype=cdtype)
        )
    return TFMap(np.asarray(out.numpy()))
