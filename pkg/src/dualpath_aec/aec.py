"""
Frequency-domain state-space echo canceller.

Each bin carries an independent multi-tap echo path over the last ``taps``
reference frames (tap 0 is the current frame). Two copies of the path are
kept. The background copy is tracked with a diagonal Kalman filter:
random-walk state model, observation noise taken from the smoothed
residual power. The foreground copy produces the output and only takes
over the background weights once their residual is significantly lower,
judged over all bins. Near-end speech that the reference cannot explain
therefore leaves the output untouched, however the background wanders.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .config import AecConfig, StftConfig
from .dsp import istft, stft
from .errors import EmptyInputError, ShapeError
from .log import get_logger

logger = get_logger(__name__)

# Foreground/background decision thresholds on the fast and slow averages
# of the residual-energy difference, and the backtrack factor.
FAST_UPDATE = 0.5
SLOW_UPDATE = 0.25
BACKTRACK = 4.0


@dataclass
class AecState:
    """Per-stream adaptive filter state.

    ``weights`` is the foreground echo path that produces the output;
    ``background`` is the Kalman-tracked path with covariance
    ``state_cov``.
    """

    taps_per_bin: int
    weights: np.ndarray
    background: np.ndarray
    state_cov: np.ndarray
    ref_history: np.ndarray
    obs_noise: np.ndarray
    process_noise: float
    observation_noise_floor: float
    smoothing: float
    last_gain: np.ndarray = field(default=None)  # type: ignore[assignment]
    frames_seen: int = 0
    foreground_updates: int = 0
    background_resets: int = 0
    diff_fast: float = 0.0
    diff_slow: float = 0.0
    var_fast: float = 0.0
    var_slow: float = 0.0

    @classmethod
    def initial(cls, num_bins: int, cfg: AecConfig) -> "AecState":
        shape = (num_bins, cfg.taps)
        return cls(
            taps_per_bin=cfg.taps,
            weights=np.zeros(shape, np.complex128),
            background=np.zeros(shape, np.complex128),
            state_cov=np.full(shape, float(cfg.initial_cov)),
            ref_history=np.zeros(shape, np.complex128),
            obs_noise=np.full(num_bins, float(cfg.obs_noise_floor)),
            process_noise=float(cfg.process_noise),
            observation_noise_floor=float(cfg.obs_noise_floor),
            smoothing=float(cfg.smoothing),
            last_gain=np.zeros(shape, np.complex128),
        )

    @property
    def num_bins(self) -> int:
        return self.weights.shape[0]

    def _reset_averages(self) -> None:
        self.diff_fast = self.diff_slow = 0.0
        self.var_fast = self.var_slow = 0.0


def aec_step(
    state: AecState, d_frame: np.ndarray, x_frame: np.ndarray
) -> Tuple[np.ndarray, AecState]:
    """
    Filter one frame and adapt the echo path.

    The state is updated in place and returned for convenience.

    Args:
        state: Stream state from :meth:`AecState.initial`.
        d_frame: Microphone spectrum ``[F]``.
        x_frame: Far-end reference spectrum ``[F]``.

    Returns:
        Error spectrum ``d - y_hat`` and the updated state.
    """
    e_frame, _ = _step(state, d_frame, x_frame)
    return e_frame, state


def _select(state: AecState, s_ff: float, s_ee: float, d_bf: float) -> int:
    """+1 to adopt the background, -1 to reset it, 0 to keep both."""
    diff = s_ff - s_ee
    spread = s_ff * d_bf
    state.diff_fast = 0.6 * state.diff_fast + 0.4 * diff
    state.var_fast = 0.36 * state.var_fast + 0.16 * spread
    state.diff_slow = 0.85 * state.diff_slow + 0.15 * diff
    state.var_slow = 0.7225 * state.var_slow + 0.0225 * spread

    def signed_sq(v: float) -> float:
        return v * abs(v)

    if (
        signed_sq(diff) > spread
        or signed_sq(state.diff_fast) > FAST_UPDATE * state.var_fast
        or signed_sq(state.diff_slow) > SLOW_UPDATE * state.var_slow
    ):
        return 1
    if (
        -signed_sq(diff) > BACKTRACK * spread
        or -signed_sq(state.diff_fast) > BACKTRACK * state.var_fast
        or -signed_sq(state.diff_slow) > BACKTRACK * state.var_slow
    ):
        return -1
    return 0


def _step(
    state: AecState, d_frame: np.ndarray, x_frame: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    d_frame = np.asarray(d_frame, dtype=np.complex128)
    x_frame = np.asarray(x_frame, dtype=np.complex128)
    if d_frame.shape != (state.num_bins,) or x_frame.shape != d_frame.shape:
        raise ShapeError(
            f"aec expects frames of {state.num_bins} bins, got "
            f"{d_frame.shape} and {x_frame.shape}"
        )

    hist = state.ref_history
    hist[:, 1:] = hist[:, :-1]
    hist[:, 0] = x_frame

    y_fg = np.sum(state.weights * hist, axis=1)
    y_bg = np.sum(state.background * hist, axis=1)
    e_fg = d_frame - y_fg
    e_bg = d_frame - y_bg

    decision = _select(
        state,
        float(np.sum(np.abs(e_fg) ** 2)),
        float(np.sum(np.abs(e_bg) ** 2)),
        float(np.sum(np.abs(y_bg - y_fg) ** 2)),
    )
    if decision > 0:
        state.weights = state.background.copy()
        state.foreground_updates += 1
        state._reset_averages()
        y_fg, e_fg = y_bg, e_bg
    elif decision < 0:
        state.background = state.weights.copy()
        state.background_resets += 1
        state._reset_averages()
        e_bg = e_fg

    beta = state.smoothing
    state.obs_noise = np.maximum(
        beta * state.obs_noise + (1.0 - beta) * np.abs(e_bg) ** 2,
        state.observation_noise_floor,
    )
    cov = state.state_cov + state.process_noise
    ref_power = np.abs(hist) ** 2
    innovation_power = np.sum(cov * ref_power, axis=1) + state.obs_noise
    gain = cov * np.conj(hist) / innovation_power[:, None]

    state.background = state.background + gain * e_bg[:, None]
    state.state_cov = cov * (1.0 - cov * ref_power / innovation_power[:, None])
    state.last_gain = gain
    state.frames_seen += 1
    return e_fg, y_fg


def aec_frames(
    d_spec: np.ndarray, x_spec: np.ndarray, cfg: AecConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run the canceller over whole spectrograms.

    Args:
        d_spec: Microphone spectrum ``[T, F]``.
        x_spec: Reference spectrum ``[T, F]``.
        cfg: Filter settings.

    Returns:
        Error and echo-estimate spectra, both ``[T, F]``.
    """
    if d_spec.shape != x_spec.shape:
        raise ShapeError(
            f"mic and reference spectra differ: {d_spec.shape} vs "
            f"{x_spec.shape}"
        )
    state = AecState.initial(d_spec.shape[-1], cfg)
    errors = np.empty_like(d_spec, dtype=np.complex128)
    echoes = np.empty_like(errors)
    for t in range(d_spec.shape[0]):
        errors[t], echoes[t] = _step(state, d_spec[t], x_spec[t])
    return errors, echoes


def aec_process(
    d: np.ndarray,
    x: np.ndarray,
    stft_cfg: Optional[StftConfig] = None,
    aec_cfg: Optional[AecConfig] = None,
    return_echo: bool = False,
) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """
    Cancel the linear echo of ``x`` in ``d``.

    Args:
        d: Microphone PCM.
        x: Far-end reference PCM. The shorter input is zero-padded.
        stft_cfg: Framing, defaults to 16 kHz / 20 ms / 10 ms.
        aec_cfg: Filter settings.
        return_echo: Also return the echo estimate.

    Returns:
        Error signal with ``len(d)`` samples, optionally with the echo
        estimate.
    """
    stft_cfg = stft_cfg or StftConfig()
    aec_cfg = aec_cfg or AecConfig()
    d = np.asarray(d, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if d.size == 0:
        raise EmptyInputError("microphone signal is empty")
    length = max(d.size, x.size)
    if length < stft_cfg.window_len:
        raise EmptyInputError(
            f"need at least {stft_cfg.window_len} samples, got {length}"
        )
    d_pad = np.pad(d, (0, length - d.size))
    x_pad = np.pad(x, (0, length - x.size))

    spec = stft(np.stack([d_pad, x_pad]), stft_cfg).data
    errors, echoes = aec_frames(spec[0], spec[1], aec_cfg)
    logger.debug("aec processed %d frames", errors.shape[0])

    e = istft(errors[None], stft_cfg, length=d.size)
    if return_echo:
        return e, istft(echoes[None], stft_cfg, length=d.size)
    return e
