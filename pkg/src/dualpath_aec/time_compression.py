"""Skip prediction along time and frame-copy decompression."""

from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import SUPPORTED_RATIOS
from .errors import ConfigError, ShapeError

ArrayLike = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True)
class SkipConfig:
    """Group size and the dimensions of the stacked linear map."""

    ratio: int
    in_dim: int
    out_dim: int

    def __post_init__(self) -> None:
        if self.ratio not in SUPPORTED_RATIOS:
            raise ConfigError(
                f"unsupported time ratio {self.ratio}; expected one of "
                f"{SUPPORTED_RATIOS}"
            )

    @property
    def stack_len(self) -> int:
        return self.ratio

    def compressed_frames(self, num_frames: int) -> int:
        return -(-num_frames // self.ratio)


class SkipCompressor(nn.Module):
    """
    Linear map over the current frame and ``r - 1`` history frames.

    Implemented as a ``(r, 1)`` convolution with stride ``r`` on the input
    left-padded by ``r - 1`` zero frames, so output ``t'`` sees frames
    ``t'r - r + 1 .. t'r``.
    """

    def __init__(self, cfg: SkipConfig):
        super().__init__()
        self.cfg = cfg
        r = cfg.ratio
        self.conv = nn.Conv2d(
            cfg.in_dim, cfg.out_dim, kernel_size=(r, 1), stride=(r, 1)
        )

    @property
    def compress_matrix(self) -> torch.Tensor:
        """``(r * in_dim) x out_dim`` view, ``j * in_dim + d`` (j=0 oldest)."""
        w = self.conv.weight[..., 0]  # [E, D, r]
        return w.permute(2, 1, 0).reshape(-1, self.cfg.out_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """``[N, D, T, F]`` -> ``[N, E, ceil(T / r), F]``."""
        if x.shape[1] != self.cfg.in_dim:
            raise ShapeError(
                f"skip compressor expects {self.cfg.in_dim} channels, got "
                f"{x.shape[1]}"
            )
        r = self.cfg.ratio
        return self.conv(F.pad(x, (0, 0, r - 1, 0)))

    def stream(self) -> "SkipStream":
        return SkipStream(self)


class SkipStream:
    """
    Ring buffer of the last ``r`` frames for one stream.

    The compressed feature is produced on the first frame of every group
    and reused for the rest of it.
    """

    def __init__(self, compressor: SkipCompressor):
        self.compressor = compressor
        self.ratio = compressor.cfg.ratio
        self._frames: Deque[torch.Tensor] = deque(maxlen=self.ratio)
        self._count = 0

    def push(self, frame: torch.Tensor) -> Optional[torch.Tensor]:
        """
        Add one frame ``[N, D, F]``.

        Returns:
            ``[N, E, 1, F]`` on group starts, None otherwise.
        """
        if not self._frames:
            for _ in range(self.ratio):
                self._frames.append(torch.zeros_like(frame))
        self._frames.append(frame)
        start = self._count % self.ratio == 0
        self._count += 1
        if not start:
            return None
        stacked = torch.stack(list(self._frames), dim=2)
        return self.compressor.conv(stacked)


def skip_compress(x: np.ndarray, compressor: SkipCompressor) -> np.ndarray:
    """``[D, T, F]`` -> ``[E, T', F]`` through a compressor's linear map."""
    param = compressor.conv.weight
    with torch.no_grad():
        t = torch.as_tensor(np.asarray(x), dtype=param.dtype)[None]
        return compressor(t)[0].numpy()


def skip_decompress(feat: ArrayLike, ratio: int, num_frames: int) -> ArrayLike:
    """
    Copy every compressed frame forward over its group.

    ``out[..., t, :] = feat[..., t // ratio, :]`` along the second-to-last
    axis.

    Raises:
        ShapeError: If ``feat`` does not hold ``ceil(num_frames / ratio)``
            frames.
    """
    expected = -(-num_frames // ratio)
    if feat.shape[-2] != expected:
        raise ShapeError(
            f"{feat.shape[-2]} compressed frames cannot cover {num_frames} "
            f"frames at ratio {ratio} (expected {expected})"
        )
    if isinstance(feat, torch.Tensor):
        out = torch.repeat_interleave(feat, ratio, dim=-2)
        return out[..., :num_frames, :]
    out_np = np.repeat(np.asarray(feat), ratio, axis=-2)
    return out_np[..., :num_frames, :]


def group_bounds(t_compressed: int, ratio: int) -> Tuple[int, int]:
    """Input frames ``[first, last]`` feeding one compressed frame."""
    return t_compressed * ratio - ratio + 1, t_compressed * ratio
