"""Causal STFT analysis/synthesis, log-power features and WAV I/O."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import soundfile as sf
from numpy.lib.stride_tricks import sliding_window_view

from .config import StftConfig
from .errors import (
    AudioFormatError,
    EmptyInputError,
    NumericError,
    ShapeError,
)
from .log import get_logger

logger = get_logger(__name__)

LOG_EPS = 1e-10


@dataclass(frozen=True)
class TFMap:
    """Complex time-frequency map indexed ``[signal, frame, bin]``."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise ShapeError(
                f"TFMap expects [signals, frames, bins], got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise NumericError("TFMap values must be finite")
        object.__setattr__(self, "data", data.astype(np.complex128))

    @property
    def num_signals(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_bins(self) -> int:
        return self.data.shape[2]


SpecLike = Union[TFMap, np.ndarray]


def as_array(spec: SpecLike) -> np.ndarray:
    """Return the complex ``[C, T, F]`` array behind a TFMap or array."""
    if isinstance(spec, TFMap):
        return spec.data
    data = np.asarray(spec)
    return data[None] if data.ndim == 2 else data


def _check_bins(num_bins: int, cfg: StftConfig) -> None:
    if num_bins != cfg.num_bins:
        raise ShapeError(
            f"bin count {num_bins} does not match stft config "
            f"({cfg.num_bins} bins)"
        )


def num_frames(num_samples: int, cfg: StftConfig) -> int:
    """Frames produced by :func:`stft` for ``num_samples`` samples."""
    if num_samples < cfg.window_len:
        return 0
    return (num_samples - cfg.window_len) // cfg.hop + 1


def stft(samples: np.ndarray, cfg: StftConfig) -> TFMap:
    """
    Causal short-time Fourier transform without padding.

    Frame ``t`` covers samples ``[t*hop, t*hop + window_len)``.

    Args:
        samples: Mono ``(N,)`` or multi-signal ``(C, N)`` PCM.
        cfg: Framing parameters.

    Returns:
        TFMap of shape ``[C, T, F]``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.shape[-1] < cfg.window_len:
        raise EmptyInputError(
            f"need at least {cfg.window_len} samples, got {x.shape[-1]}"
        )
    frames = sliding_window_view(x, cfg.window_len, axis=-1)[:, :: cfg.hop]
    spec = np.fft.rfft(frames * cfg.window, n=cfg.fft_size, axis=-1)
    return TFMap(spec)


def _synthesis_frames(spec: np.ndarray, cfg: StftConfig) -> np.ndarray:
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=-1)
    return frames[..., : cfg.window_len] * cfg.window


def istft(
    spec: SpecLike, cfg: StftConfig, length: Optional[int] = None
) -> np.ndarray:
    """
    Weighted overlap-add synthesis.

    The overlap-added signal is divided by the overlap-added squared window,
    which equals one on the fully overlapped interior.

    Args:
        spec: Single-signal map ``[1, T, F]`` (or ``[T, F]``).
        cfg: Framing parameters used for analysis.
        length: Pad with zeros or trim the result to this many samples.

    Returns:
        Mono PCM as float64.
    """
    data = as_array(spec)
    if data.shape[0] != 1:
        raise ShapeError(f"istft expects one signal, got {data.shape[0]}")
    _check_bins(data.shape[-1], cfg)
    frames = _synthesis_frames(data[0], cfg)
    count = frames.shape[0]
    total = (count - 1) * cfg.hop + cfg.window_len if count else 0

    out = np.zeros(total)
    envelope = np.zeros(total)
    window_sq = cfg.window**2
    for t in range(count):
        start = t * cfg.hop
        out[start : start + cfg.window_len] += frames[t]
        envelope[start : start + cfg.window_len] += window_sq
    nonzero = envelope > 1e-12
    out[nonzero] /= envelope[nonzero]

    if length is not None:
        if length > total:
            out = np.pad(out, (0, length - total))
        else:
            out = out[:length]
    return out


def log_power(spec: SpecLike, eps: float = LOG_EPS) -> np.ndarray:
    """``log(|X|^2 + eps)`` element-wise, real ``[c, t, f]``."""
    return np.log(np.abs(as_array(spec)) ** 2 + eps)


class StreamingStft:
    """Frame-by-frame analysis matching :func:`stft` exactly."""

    def __init__(self, cfg: StftConfig, num_signals: int = 1):
        self.cfg = cfg
        self.num_signals = num_signals
        self._buffer = np.zeros((num_signals, 0))

    def push(self, samples: np.ndarray) -> np.ndarray:
        """
        Append samples and return every newly complete frame.

        Returns:
            Complex array ``[C, n_new, F]`` (``n_new`` may be 0).
        """
        x = np.asarray(samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
        if x.shape[0] != self.num_signals:
            raise ShapeError(
                f"expected {self.num_signals} signals, got {x.shape[0]}"
            )
        self._buffer = np.concatenate([self._buffer, x], axis=-1)
        count = num_frames(self._buffer.shape[-1], self.cfg)
        if count == 0:
            return np.zeros(
                (self.num_signals, 0, self.cfg.num_bins), np.complex128
            )
        spec = stft(self._buffer, self.cfg).data
        self._buffer = self._buffer[:, count * self.cfg.hop :]
        return spec


class StreamingIstft:
    """Overlap-add synthesis emitting ``hop`` final samples per frame."""

    def __init__(self, cfg: StftConfig):
        self.cfg = cfg
        self._acc = np.zeros(cfg.window_len)
        self._env = np.zeros(cfg.window_len)
        self._window_sq = cfg.window**2

    def push(self, frame: np.ndarray) -> np.ndarray:
        """Add one complex frame ``[F]`` and return ``hop`` samples."""
        frame = np.asarray(frame)
        _check_bins(frame.shape[-1], self.cfg)
        hop = self.cfg.hop
        self._acc += _synthesis_frames(frame, self.cfg)
        self._env += self._window_sq
        out = self._normalized(hop)
        self._acc = np.concatenate([self._acc[hop:], np.zeros(hop)])
        self._env = np.concatenate([self._env[hop:], np.zeros(hop)])
        return out

    def flush(self) -> np.ndarray:
        """Return the ``window_len - hop`` samples still overlapping."""
        out = self._normalized(self.cfg.window_len - self.cfg.hop)
        self._acc[:] = 0.0
        self._env[:] = 0.0
        return out

    def _normalized(self, count: int) -> np.ndarray:
        acc = self._acc[:count].copy()
        env = self._env[:count]
        nonzero = env > 1e-12
        acc[nonzero] /= env[nonzero]
        return acc


def read_wav(path: Union[str, Path], cfg: StftConfig) -> np.ndarray:
    """
    Read a mono WAV at the configured sample rate.

    Raises:
        FileNotFoundError: If the path does not exist.
        AudioFormatError: On a rate or channel mismatch. No resampling.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Audio file not found: {path}")
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except RuntimeError as exc:
        raise AudioFormatError(f"{path}: unreadable audio ({exc})") from exc
    if rate != cfg.sample_rate:
        raise AudioFormatError(
            f"{path}: sample rate {rate} Hz, expected {cfg.sample_rate} Hz"
        )
    if data.shape[1] != 1:
        raise AudioFormatError(
            f"{path}: {data.shape[1]} channels, expected mono"
        )
    return data[:, 0]


def write_wav(
    path: Union[str, Path], samples: np.ndarray, sample_rate: int
) -> None:
    """Write 16-bit PCM mono, clipping to [-1, 1]."""
    x = np.asarray(samples, dtype=np.float64)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak > 1.0:
        logger.warning("%s: clipping output with peak %.3f", path, peak)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(x, -1.0, 1.0), sample_rate, subtype="PCM_16")
    logger.info("wrote %s (%d samples)", path, x.size)
