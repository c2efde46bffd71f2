"""End-to-end echo cancellation and noise suppression."""

from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch

from .aec import AecState, aec_frames, aec_process, aec_step
from .config import RunConfig
from .dsp import StreamingIstft, StreamingStft, istft, stft
from .errors import ConfigError, EmptyInputError, ShapeError
from .log import get_logger
from .model import DualPathNet, DualPathNetStream, build_model
from .weights import WeightContainer, init_weights, load_into

logger = get_logger(__name__)

WeightsLike = Union[WeightContainer, str, Path, None]


def _align(mic: np.ndarray, ref: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mic = np.asarray(mic, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    length = max(mic.size, ref.size)
    return (
        np.pad(mic, (0, length - mic.size)),
        np.pad(ref, (0, length - ref.size)),
    )


class Enhancer:
    """Echo canceller plus mask network over microphone/reference pairs."""

    def __init__(
        self,
        config: Optional[RunConfig] = None,
        weights: WeightsLike = None,
        seed: int = 0,
    ):
        """
        Initialize the enhancer.

        Args:
            config: Run configuration; defaults to the uncompressed model.
            weights: Container, path to a container file, or None for a
                seeded random initialization.
            seed: Seed used when ``weights`` is None.
        """
        self.config = config or RunConfig()
        if self.config.model.num_signals != 3:
            raise ConfigError(
                "the enhancer feeds mic, reference and error spectra; "
                "model.num_signals must be 3"
            )
        self.weights_source = weights
        self.seed = seed
        self._weights: Optional[WeightContainer] = None
        self._net: Optional[DualPathNet] = None

    @property
    def latency_samples(self) -> int:
        """Algorithmic latency: one analysis window."""
        return self.config.stft.window_len

    def load_weights(self) -> WeightContainer:
        """Load (or initialize) the weight container once."""
        if self._weights is not None:
            return self._weights
        source = self.weights_source
        if source is None:
            logger.warning(
                "no weights given; using seeded random initialization "
                "(seed=%d)",
                self.seed,
            )
            self._weights = init_weights(self.config, self.seed)
        elif isinstance(source, WeightContainer):
            self._weights = source
        else:
            self._weights = WeightContainer.load(source, self.config)
        return self._weights

    @property
    def net(self) -> DualPathNet:
        if self._net is None:
            net = build_model(self.config.model, self.config.stft)
            load_into(net, self.load_weights())
            self._net = net
            logger.info(
                "model ready: %s, latency %d samples",
                self.config.model.freq_method,
                self.latency_samples,
            )
        return self._net

    @torch.inference_mode()
    def enhance(
        self, mic: np.ndarray, ref: np.ndarray, streaming: bool = False
    ) -> np.ndarray:
        """
        Enhance a whole clip.

        Args:
            mic: Microphone PCM.
            ref: Far-end reference PCM; the shorter input is zero-padded.
            streaming: Process frame by frame through :class:`EnhancerStream`
                instead of the offline pass. Both give the same samples.

        Returns:
            Enhanced PCM with ``len(mic)`` samples.
        """
        mic = np.asarray(mic, dtype=np.float64).ravel()
        if mic.size == 0:
            raise EmptyInputError("microphone signal is empty")
        d, x = _align(mic, ref)
        if d.size < self.config.stft.window_len:
            raise EmptyInputError(
                f"need at least {self.config.stft.window_len} samples, "
                f"got {d.size}"
            )
        if streaming:
            out = self._enhance_streaming(d, x)
        else:
            out = self._enhance_offline(d, x)
        if out.size < mic.size:
            return np.pad(out, (0, mic.size - out.size))
        return out[: mic.size]

    def _enhance_offline(self, d: np.ndarray, x: np.ndarray) -> np.ndarray:
        cfg = self.config
        spec = stft(np.stack([d, x]), cfg.stft).data
        errors, _ = aec_frames(spec[0], spec[1], cfg.aec)
        stacked = np.stack([spec[0], spec[1], errors])[None]
        out = self.net.enhance_spectrum(torch.as_tensor(stacked))
        return istft(out.numpy(), cfg.stft)

    def _enhance_streaming(
        self, d: np.ndarray, x: np.ndarray, chunk: Optional[int] = None
    ) -> np.ndarray:
        stream = self.stream()
        chunk = chunk or 4 * self.config.stft.hop + 7
        pieces = [
            stream.push(d[i : i + chunk], x[i : i + chunk])
            for i in range(0, d.size, chunk)
        ]
        pieces.append(stream.flush())
        return np.concatenate(pieces)

    def stream(self) -> "EnhancerStream":
        return EnhancerStream(self)

    def aec_output(self, mic: np.ndarray, ref: np.ndarray) -> np.ndarray:
        """Linear echo canceller output alone, ``len(mic)`` samples."""
        return aec_process(mic, ref, self.config.stft, self.config.aec)


class EnhancerStream:
    """
    Per-stream state: framer, echo canceller, network state and
    overlap-add synthesis. ``push`` returns ``hop`` samples per completed
    frame; ``flush`` returns the overlapping tail.
    """

    def __init__(self, enhancer: Enhancer):
        cfg = enhancer.config
        self.enhancer = enhancer
        self.framer = StreamingStft(cfg.stft, num_signals=2)
        self.aec = AecState.initial(cfg.stft.num_bins, cfg.aec)
        self.net_state: DualPathNetStream = enhancer.net.stream()
        self.synth = StreamingIstft(cfg.stft)

    @torch.inference_mode()
    def push(self, mic: np.ndarray, ref: np.ndarray) -> np.ndarray:
        mic = np.asarray(mic, dtype=np.float64).ravel()
        ref = np.asarray(ref, dtype=np.float64).ravel()
        if mic.shape != ref.shape:
            raise ShapeError(
                f"mic and reference chunks differ: {mic.size} vs {ref.size}"
            )
        frames = self.framer.push(np.stack([mic, ref]))
        out: List[np.ndarray] = []
        for t in range(frames.shape[1]):
            d_frame, x_frame = frames[0, t], frames[1, t]
            e_frame, _ = aec_step(self.aec, d_frame, x_frame)
            stacked = np.stack([d_frame, x_frame, e_frame])[None]
            enhanced = self.net_state.step(torch.as_tensor(stacked))
            out.append(self.synth.push(enhanced[0].numpy()))
        if not out:
            return np.zeros(0)
        return np.concatenate(out)

    def flush(self) -> np.ndarray:
        return self.synth.flush()


def enhance(
    mic: np.ndarray,
    ref: np.ndarray,
    config: Optional[RunConfig] = None,
    weights: WeightsLike = None,
    streaming: bool = False,
    seed: int = 0,
) -> np.ndarray:
    """Convenience wrapper around :meth:`Enhancer.enhance`."""
    return Enhancer(config, weights, seed).enhance(mic, ref, streaming)
