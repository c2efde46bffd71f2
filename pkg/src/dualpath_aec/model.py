"""
Online dual-path network producing one complex mask per input signal.

Layout of the feature tensor is ``[N, E, T, B]``: batch, feature channels,
frames and frequency positions (bins or bands). Every operation along the
frame axis is causal, so the same weights run offline over whole clips or
one frame at a time through :class:`DualPathNetStream`.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig, StftConfig
from .dsp import LOG_EPS, SpecLike, TFMap, as_array
from .errors import ConfigError, NumericError, ShapeError
from .freq_compression import (
    TrainableBandTransform,
    build_band_layout,
    build_fixed_filterbank,
)
from .log import get_logger
from .postnet import PostNet
from .time_compression import SkipCompressor, SkipConfig, skip_decompress

logger = get_logger(__name__)

ATTENTION_EPS = 1e-6

AttentionState = Tuple[torch.Tensor, torch.Tensor]


def feature_map(u: torch.Tensor) -> torch.Tensor:
    """Positive kernel feature map ``elu(u) + 1``."""
    return F.elu(u) + 1.0


class LinearAttention(nn.Module):
    """
    Multi-head kernelized attention with a residual path and layer norm.

    Causal mode keeps running sums of ``phi(k) v^T`` and ``phi(k)``; the
    offline pass evaluates them chunk by chunk with the carry from the
    previous chunk.
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        chunk: int = 64,
        eps: float = ATTENTION_EPS,
    ):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.chunk = chunk
        self.eps = eps
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)
        self.norm = nn.LayerNorm(dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        n, length, _ = x.shape
        return x.reshape(n, length, self.heads, -1).transpose(1, 2)

    def _merge(self, x: torch.Tensor) -> torch.Tensor:
        n, _, length, _ = x.shape
        return x.transpose(1, 2).reshape(n, length, self.dim)

    def _project(
        self, x: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        q = feature_map(self._split(self.q(x)))
        k = feature_map(self._split(self.k(x)))
        v = self._split(self.v(x))
        return q, k, v

    def _causal(
        self,
        q: torch.Tensor,
        k: torch.Tensor,
        v: torch.Tensor,
        state: Optional[AttentionState],
    ) -> Tuple[torch.Tensor, AttentionState]:
        n, h, length, d = q.shape
        if state is None:
            kv = q.new_zeros(n, h, d, d)
            ksum = q.new_zeros(n, h, d)
        else:
            kv, ksum = state
        outputs = []
        for start in range(0, length, self.chunk):
            stop = min(start + self.chunk, length)
            qc = q[:, :, start:stop]
            kc = k[:, :, start:stop]
            vc = v[:, :, start:stop]
            kv_run = torch.einsum("nhld,nhle->nhlde", kc, vc).cumsum(2)
            kv_run = kv_run + kv[:, :, None]
            k_run = kc.cumsum(2) + ksum[:, :, None]
            num = torch.einsum("nhld,nhlde->nhle", qc, kv_run)
            den = torch.einsum("nhld,nhld->nhl", qc, k_run) + self.eps
            outputs.append(num / den[..., None])
            kv, ksum = kv_run[:, :, -1], k_run[:, :, -1]
        return torch.cat(outputs, dim=2), (kv, ksum)

    def _bidirectional(
        self, q: torch.Tensor, k: torch.Tensor, v: torch.Tensor
    ) -> torch.Tensor:
        kv = torch.einsum("nhld,nhle->nhde", k, v)
        ksum = k.sum(dim=2)
        num = torch.einsum("nhld,nhde->nhle", q, kv)
        den = torch.einsum("nhld,nhd->nhl", q, ksum) + self.eps
        return num / den[..., None]

    def forward(self, x: torch.Tensor, causal: bool = False) -> torch.Tensor:
        """``[N, L, E]`` -> ``[N, L, E]``."""
        q, k, v = self._project(x)
        if causal:
            att, _ = self._causal(q, k, v, None)
        else:
            att = self._bidirectional(q, k, v)
        return self.norm(x + self.o(self._merge(att)))

    def step(
        self, x: torch.Tensor, state: Optional[AttentionState]
    ) -> Tuple[torch.Tensor, AttentionState]:
        """Causal attention for the next element(s) ``[N, L, E]``."""
        q, k, v = self._project(x)
        att, state = self._causal(q, k, v, state)
        return self.norm(x + self.o(self._merge(att))), state


class CausalConvLayer(nn.Module):
    """
    Depthwise conv (causal in time, centred in frequency), pointwise conv,
    layer norm over channels and PReLU.
    """

    def __init__(self, dim: int, kernel: Tuple[int, int] = (3, 3)):
        super().__init__()
        self.kernel = kernel
        self.dw = nn.Conv2d(dim, dim, kernel, groups=dim)
        self.pw = nn.Conv2d(dim, dim, 1)
        self.norm = nn.LayerNorm(dim)
        self.act = nn.PReLU(dim)

    def _finish(self, x: torch.Tensor) -> torch.Tensor:
        x = self.pw(self.dw(x))
        x = self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        return self.act(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        kt, kf = self.kernel
        return self._finish(F.pad(x, (kf // 2, kf // 2, kt - 1, 0)))

    def step(
        self, x: torch.Tensor, history: Optional[torch.Tensor]
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """One frame ``[N, E, 1, B]`` given the previous ``kt - 1`` frames."""
        kt, kf = self.kernel
        if history is None:
            n, e, _, b = x.shape
            history = x.new_zeros(n, e, kt - 1, b)
        window = torch.cat([history, x], dim=2)
        out = self._finish(F.pad(window, (kf // 2, kf // 2, 0, 0)))
        return out, window[:, :, 1:]


@dataclass
class BlockState:
    gru: Optional[torch.Tensor] = None
    attention: Optional[AttentionState] = None


class DualPathBlock(nn.Module):
    """
    Fullband attention across frequency (bidirectional, per frame), an
    optional residual GRU along time, then subband attention along time
    (causal, per frequency position).
    """

    def __init__(self, dim: int, heads: int, use_gru: bool, chunk: int = 64):
        super().__init__()
        self.attn_f = LinearAttention(dim, heads, chunk)
        self.gru: Optional[nn.GRU] = (
            nn.GRU(dim, dim, batch_first=True) if use_gru else None
        )
        self.attn_t = LinearAttention(dim, heads, chunk)

    def _fullband(self, x: torch.Tensor) -> torch.Tensor:
        n, e, t, b = x.shape
        seq = x.permute(0, 2, 3, 1).reshape(n * t, b, e)
        out = self.attn_f(seq, causal=False)
        return out.reshape(n, t, b, e).permute(0, 3, 1, 2)

    @staticmethod
    def _to_time(x: torch.Tensor) -> torch.Tensor:
        n, e, t, b = x.shape
        return x.permute(0, 3, 2, 1).reshape(n * b, t, e)

    @staticmethod
    def _from_time(seq: torch.Tensor, n: int, b: int) -> torch.Tensor:
        _, t, e = seq.shape
        return seq.reshape(n, b, t, e).permute(0, 3, 2, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, _, _, b = x.shape
        x = self._fullband(x)
        seq = self._to_time(x)
        if self.gru is not None:
            seq = seq + self.gru(seq)[0]
        seq = self.attn_t(seq, causal=True)
        return self._from_time(seq, n, b)

    def step(
        self, x: torch.Tensor, state: BlockState
    ) -> Tuple[torch.Tensor, BlockState]:
        n, _, _, b = x.shape
        x = self._fullband(x)
        seq = self._to_time(x)
        if self.gru is not None:
            out, state.gru = self.gru(seq, state.gru)
            seq = seq + out
        seq, state.attention = self.attn_t.step(seq, state.attention)
        return self._from_time(seq, n, b), state


@dataclass(frozen=True)
class MaskSet:
    """Complex masks ``[C, T, F]``, one per input signal."""

    masks: np.ndarray

    def __post_init__(self) -> None:
        masks = np.asarray(self.masks)
        if masks.ndim != 3:
            raise ShapeError(f"masks must be [C, T, F], got {masks.shape}")
        if not np.all(np.isfinite(masks)):
            raise NumericError("masks must be finite")
        object.__setattr__(self, "masks", masks.astype(np.complex128))


def apply_masks_and_sum(spec: SpecLike, masks: MaskSet) -> TFMap:
    """``Y[t, f] = sum_c M_c[t, f] X_c[t, f]``."""
    data = as_array(spec)
    if data.shape != masks.masks.shape:
        raise ShapeError(
            f"spectrum {data.shape} and masks {masks.masks.shape} differ"
        )
    return TFMap(np.sum(masks.masks * data, axis=0, keepdims=True))


def stack_spectra(spec: torch.Tensor) -> torch.Tensor:
    """Complex ``[N, C, T, F]`` -> real ``[N, 2C, T, F]`` (Re planes, Im)."""
    return torch.cat([spec.real, spec.imag], dim=1)


def masks_from_channels(x: torch.Tensor) -> torch.Tensor:
    """Real ``[N, 2C, ...]`` -> complex ``[N, C, ...]``."""
    c = x.shape[1] // 2
    return torch.complex(x[:, :c], x[:, c:])


class DualPathNet(nn.Module):
    """
    Mask estimator with optional time, frequency or dual-path compression.

    Processing order: skip prediction over time, then frequency
    compression (or the 1x1 input layer), encoder, dual-path blocks,
    decoder, frequency decompression, frame copy, 1x1 output layer.
    """

    def __init__(
        self,
        cfg: Optional[ModelConfig] = None,
        stft: Optional[StftConfig] = None,
    ):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        self.stft = stft = stft or StftConfig()
        self.num_bins = stft.num_bins
        self.num_bands = cfg.num_bands(stft.num_bins)
        signals = cfg.num_signals
        stacked = 2 * signals
        dim = cfg.feature_dim

        self.skip: Optional[SkipCompressor] = None
        self.freq: Optional[TrainableBandTransform] = None
        self.in_layer: Optional[nn.Conv2d] = None
        self.fixed_weights: Optional[torch.Tensor]
        self.fixed_pinv: Optional[torch.Tensor]

        if cfg.time_ratio > 1:
            self.skip = SkipCompressor(
                SkipConfig(cfg.time_ratio, stacked, dim)
            )
        if cfg.is_trainable:
            layout = build_band_layout(
                "mel", stft.num_bins, self.num_bands, stft.sample_rate
            )
            in_channels = dim if self.skip is not None else stacked
            self.freq = TrainableBandTransform(
                layout, in_channels, dim, out_channels=2 * stacked
            )
        if cfg.is_fixed:
            bank = build_fixed_filterbank(
                cfg.band_scale,
                stft.num_bins,
                self.num_bands,
                normalize=cfg.normalize_filters,
                sample_rate=stft.sample_rate,
            )
            self.register_buffer(
                "fixed_weights", torch.as_tensor(bank.weights)
            )
            self.register_buffer("fixed_pinv", torch.as_tensor(bank.pinv))
            self.in_layer = nn.Conv2d(signals, dim, 1)
        else:
            self.fixed_weights = None
            self.fixed_pinv = None
            if self.skip is None and self.freq is None:
                self.in_layer = nn.Conv2d(stacked, dim, 1)

        self.enc = nn.ModuleList(
            CausalConvLayer(dim, cfg.kernel) for _ in range(cfg.encoder_layers)
        )
        self.block = nn.ModuleList(
            DualPathBlock(
                dim, cfg.heads, i < cfg.gru_count, cfg.attention_chunk
            )
            for i in range(cfg.blocks)
        )
        self.dec = nn.ModuleList(
            CausalConvLayer(dim, cfg.kernel) for _ in range(cfg.encoder_layers)
        )
        out_in = 2 * stacked if self.freq is not None else dim
        self.out = nn.Conv2d(out_in, stacked, 1)
        self.postnet: Optional[PostNet] = (
            PostNet(cfg.postnet, stft) if cfg.postnet_enabled else None
        )

    # Front and back ends, all at the compressed frame rate.

    def _embed(self, x: torch.Tensor) -> torch.Tensor:
        if self.freq is not None:
            return self.freq.compress(x)
        if self.fixed_weights is not None:
            c = x.shape[1] // 2
            mag = torch.hypot(x[:, :c], x[:, c:])
            z = torch.log(LOG_EPS + mag @ self.fixed_weights.T)
            return self.input_layer(z)
        if self.in_layer is not None:
            return self.input_layer(x)
        return x

    def _expand(self, feat: torch.Tensor) -> torch.Tensor:
        if self.freq is not None:
            return self.freq.decompress(feat)
        if self.fixed_pinv is not None:
            return feat @ self.fixed_pinv.T
        return feat

    def input_layer(self, x: torch.Tensor) -> torch.Tensor:
        """Per-position linear map to E channels."""
        if self.in_layer is None:
            raise ShapeError("this configuration has no input layer")
        if x.shape[1] != self.in_layer.in_channels:
            raise ShapeError(
                f"input layer expects {self.in_layer.in_channels} channels, "
                f"got {x.shape[1]}"
            )
        return self.in_layer(x)

    def encoder(self, feat: torch.Tensor) -> torch.Tensor:
        for layer in self.enc:
            feat = layer(feat)
        return feat

    def decoder(self, feat: torch.Tensor) -> torch.Tensor:
        for layer in self.dec:
            feat = layer(feat)
        return feat

    def output_layer(self, feat: torch.Tensor) -> torch.Tensor:
        """Features ``[N, K, T, F]`` -> complex masks ``[N, C, T, F]``."""
        if feat.shape[1] != self.out.in_channels:
            raise ShapeError(
                f"output layer expects {self.out.in_channels} channels, "
                f"got {feat.shape[1]}"
            )
        return masks_from_channels(self.out(feat))

    def core(self, feat: torch.Tensor) -> torch.Tensor:
        feat = self.encoder(feat)
        for block in self.block:
            feat = block(feat)
        return self.decoder(feat)

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        """Complex spectra ``[N, C, T, F]`` -> complex masks, same shape."""
        if spec.shape[1] != self.cfg.num_signals or (
            spec.shape[-1] != self.num_bins
        ):
            raise ShapeError(
                f"expected [N, {self.cfg.num_signals}, T, {self.num_bins}], "
                f"got {list(spec.shape)}"
            )
        frames = spec.shape[2]
        x = stack_spectra(spec)
        if self.skip is not None:
            x = self.skip(x)
        feat = self._expand(self.core(self._embed(x)))
        if self.skip is not None:
            feat = skip_decompress(feat, self.skip.cfg.ratio, frames)
        return self.output_layer(feat)

    def enhance_spectrum(self, spec: torch.Tensor) -> torch.Tensor:
        """
        Masks, summation and (if enabled) PostNet.

        Args:
            spec: Complex ``[N, C, T, F]`` with the error signal last.

        Returns:
            Complex ``[N, T, F]``.
        """
        summed = (self.forward(spec) * spec).sum(dim=1)
        if self.postnet is None:
            return summed
        out, _ = self.postnet(spec[:, -1], summed)
        return out

    def stream(self) -> "DualPathNetStream":
        return DualPathNetStream(self)


class DualPathNetStream:
    """Per-stream recurrent state of a :class:`DualPathNet`."""

    def __init__(self, net: DualPathNet):
        self.net = net
        self.skip = net.skip.stream() if net.skip is not None else None
        self.enc_history: List[Optional[torch.Tensor]] = [None] * len(net.enc)
        self.dec_history: List[Optional[torch.Tensor]] = [None] * len(net.dec)
        self.blocks = [BlockState() for _ in net.block]
        self.postnet_hidden: Optional[torch.Tensor] = None
        self._cached: Optional[torch.Tensor] = None
        self.frames = 0

    def _core_step(self, feat: torch.Tensor) -> torch.Tensor:
        net = self.net
        for i, layer in enumerate(net.enc):
            feat, self.enc_history[i] = layer.step(feat, self.enc_history[i])
        for block, state in zip(net.block, self.blocks):
            feat, _ = block.step(feat, state)
        for i, layer in enumerate(net.dec):
            feat, self.dec_history[i] = layer.step(feat, self.dec_history[i])
        return feat

    def masks(self, frame: torch.Tensor) -> torch.Tensor:
        """Complex frame ``[N, C, F]`` -> complex masks ``[N, C, F]``."""
        x = stack_spectra(frame[:, :, None])  # [N, 2C, 1, F]
        if self.skip is not None:
            compressed = self.skip.push(x[:, :, 0])
            if compressed is not None:
                self._cached = self.net._expand(
                    self._core_step(self.net._embed(compressed))
                )
        else:
            self._cached = self.net._expand(
                self._core_step(self.net._embed(x))
            )
        self.frames += 1
        assert self._cached is not None
        return self.net.output_layer(self._cached)[:, :, 0]

    def step(self, frame: torch.Tensor) -> torch.Tensor:
        """Complex frame ``[N, C, F]`` -> enhanced frame ``[N, F]``."""
        summed = (self.masks(frame) * frame).sum(dim=1)
        if self.net.postnet is None:
            return summed
        out, self.postnet_hidden = self.net.postnet(
            frame[:, -1:, :], summed[:, None], self.postnet_hidden
        )
        return out[:, 0]


def build_model(
    cfg: ModelConfig, stft: Optional[StftConfig] = None
) -> DualPathNet:
    """Float64 network in inference mode."""
    net = DualPathNet(cfg, stft).double()
    net.eval()
    logger.debug(
        "built model: %s, %d parameters",
        cfg.freq_method,
        sum(p.numel() for p in net.parameters()),
    )
    return net
