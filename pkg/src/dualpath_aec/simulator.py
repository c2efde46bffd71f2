"""
Echo/noise scenario synthesis.

A mixture is ``mic = near + echo + noise`` where the echo is the far-end
signal convolved with a room impulse response (or delayed), and echo and
noise are scaled to the requested SER and SNR over the active part of each
component.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import fftconvolve

from .config import StftConfig
from .dsp import read_wav, write_wav
from .errors import SimulationError
from .log import get_logger

logger = get_logger(__name__)

SCENARIOS = ("ST-FE", "ST-NE", "DT")
EVAL_LEVELS_DB = (-5.0, 5.0, 15.0, math.inf)
CLIP_SECONDS = 10.0
MIN_SECONDS = 9.0
ACTIVE_RANGE_DB = 60.0
FRAME_SECONDS = 0.01
CLIP_THRESHOLD = 0.99
# 30 ms at 16 kHz, inside the canceller's tap span
MAX_ECHO_DELAY = 480


@dataclass(frozen=True)
class MixSpec:
    """Requested ratios and scenario of one mixture."""

    ser_db: float
    snr_db: float
    scenario: str
    near_absent_prob: float = 0.10
    far_absent_prob: float = 0.25
    noisy_prob: float = 0.90
    seed: int = 0
    echo_delay: int = 0

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise SimulationError(
                f"unknown scenario {self.scenario!r}; expected {SCENARIOS}"
            )
        for name in ("near_absent_prob", "far_absent_prob", "noisy_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SimulationError(f"{name} must be in [0, 1]")
        ser = float(self.ser_db)
        if self.scenario == "ST-NE" and ser != math.inf:
            raise SimulationError("ST-NE mixtures have SER = +inf")
        if self.scenario == "ST-FE" and ser != -math.inf:
            raise SimulationError("ST-FE mixtures have SER = -inf")
        if self.scenario == "DT" and not math.isfinite(ser):
            raise SimulationError("DT mixtures need a finite SER")
        if math.isnan(float(self.snr_db)) or self.snr_db == -math.inf:
            raise SimulationError("SNR must be finite or +inf")
        if self.echo_delay < 0:
            raise SimulationError("echo_delay must be >= 0")

    @property
    def noisy(self) -> bool:
        return math.isfinite(self.snr_db)

    @classmethod
    def sample(
        cls,
        seed: int,
        ser_range: Tuple[float, float] = (-5.0, 15.0),
        snr_range: Tuple[float, float] = (-5.0, 15.0),
        near_absent_prob: float = 0.10,
        far_absent_prob: float = 0.25,
        noisy_prob: float = 0.90,
        max_echo_delay: int = MAX_ECHO_DELAY,
    ) -> "MixSpec":
        """
        Draw a training-style mixture: ratios uniform in their ranges.

        ``near_absent_prob`` and ``far_absent_prob`` are marginal rates, so
        far-end absence is drawn conditionally on near-end presence. The
        pure-delay echo path gets a delay uniform in
        ``[0, max_echo_delay]`` samples; it is ignored when a RIR is mixed.
        """
        if near_absent_prob + far_absent_prob > 1.0:
            raise SimulationError(
                "near_absent_prob + far_absent_prob must be <= 1"
            )
        if max_echo_delay < 0:
            raise SimulationError("max_echo_delay must be >= 0")
        rng = np.random.default_rng(seed)
        far_given_near = 0.0
        if near_absent_prob < 1.0:
            far_given_near = far_absent_prob / (1.0 - near_absent_prob)
        if rng.random() < near_absent_prob:
            scenario, ser = "ST-FE", -math.inf
        elif rng.random() < far_given_near:
            scenario, ser = "ST-NE", math.inf
        else:
            scenario, ser = "DT", float(rng.uniform(*ser_range))
        snr = math.inf
        if rng.random() < noisy_prob:
            snr = float(rng.uniform(*snr_range))
        echo_delay = int(rng.integers(max_echo_delay + 1))
        return cls(
            ser_db=ser,
            snr_db=snr,
            scenario=scenario,
            near_absent_prob=near_absent_prob,
            far_absent_prob=far_absent_prob,
            noisy_prob=noisy_prob,
            seed=seed,
            echo_delay=echo_delay,
        )

    @classmethod
    def evaluation_grid(cls, seed: int = 0) -> List["MixSpec"]:
        """
        SER and SNR in {-5, 5, 15, +inf} dB, plus far-end single talk at
        every SNR.
        """
        specs = []
        for ser in EVAL_LEVELS_DB:
            scenario = "ST-NE" if ser == math.inf else "DT"
            for snr in EVAL_LEVELS_DB:
                specs.append(cls(ser, snr, scenario, seed=seed))
        for snr in EVAL_LEVELS_DB:
            specs.append(cls(-math.inf, snr, "ST-FE", seed=seed))
        return specs

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ("ser_db", "snr_db"):
            value = data[key]
            if not math.isfinite(value):
                data[key] = "+inf" if value > 0 else "-inf"
        return data


@dataclass
class MixResult:
    """The written triple plus the scaled components and re-measured ratios."""

    mic: np.ndarray
    farend: np.ndarray
    target: np.ndarray
    echo: np.ndarray
    noise: np.ndarray
    spec: MixSpec
    measured_ser_db: float
    measured_snr_db: float
    gain: float = 1.0
    meta: Dict[str, Any] = field(default_factory=dict)


def active_power(x: np.ndarray, sample_rate: int = 16000) -> float:
    """
    Mean power over 10 ms frames within 60 dB of the loudest frame.

    Returns 0 for an all-zero signal.
    """
    x = np.asarray(x, dtype=np.float64)
    hop = max(1, int(round(FRAME_SECONDS * sample_rate)))
    count = max(1, -(-x.size // hop))
    padded = np.pad(x, (0, count * hop - x.size))
    frames = padded.reshape(count, hop)
    energy = np.sum(frames**2, axis=1)
    peak = float(energy.max()) if energy.size else 0.0
    if peak <= 0.0:
        return 0.0
    active = energy >= peak * 10.0 ** (-ACTIVE_RANGE_DB / 10.0)
    return float(np.sum(energy[active]) / (np.count_nonzero(active) * hop))


def _ratio_db(num: float, den: float) -> float:
    if den == 0.0:
        return math.inf if num > 0.0 else math.nan
    if num == 0.0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def _fit(
    x: Optional[np.ndarray],
    length: int,
    min_length: int,
    what: str,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    if x is None:
        raise SimulationError(f"{what} signal is required for this mixture")
    x = np.asarray(x, dtype=np.float64)
    if x.size < min_length:
        raise SimulationError(
            f"{what} clip has {x.size} samples, need at least {min_length}"
        )
    if x.size > length:
        start = 0
        if rng is not None:
            start = int(rng.integers(0, x.size - length + 1))
        return x[start : start + length]
    return np.pad(x, (0, length - x.size))


def mix(
    near: Optional[np.ndarray],
    far: Optional[np.ndarray],
    noise: Optional[np.ndarray],
    rir: Optional[np.ndarray],
    spec: MixSpec,
    sample_rate: int = 16000,
    clip_seconds: float = CLIP_SECONDS,
    min_seconds: float = MIN_SECONDS,
) -> MixResult:
    """
    Synthesize ``mic``, ``farend`` and ``target`` for one spec.

    Clips are trimmed or zero-padded to ``clip_seconds``; anything shorter
    than ``min_seconds`` is rejected. Far-end single talk keeps the echo at
    its natural level and measures SNR against the echo.

    Raises:
        SimulationError: On short clips, or a silent component needed for a
            finite ratio.
    """
    length = int(round(clip_seconds * sample_rate))
    min_length = int(round(min_seconds * sample_rate))
    rng = np.random.default_rng(spec.seed)
    zeros = np.zeros(length)

    if spec.scenario == "ST-FE":
        near_sig = zeros.copy()
    else:
        near_sig = _fit(near, length, min_length, "near-end")

    if spec.scenario == "ST-NE":
        far_sig = zeros.copy()
        echo = zeros.copy()
    else:
        far_sig = _fit(far, length, min_length, "far-end")
        if rir is not None:
            echo = fftconvolve(far_sig, np.asarray(rir, np.float64))[:length]
        else:
            echo = np.concatenate([np.zeros(spec.echo_delay), far_sig])
            echo = echo[:length]
        echo = np.pad(echo, (0, length - echo.size))

    if spec.scenario == "DT":
        p_near = active_power(near_sig, sample_rate)
        p_echo = active_power(echo, sample_rate)
        if p_near == 0.0 or p_echo == 0.0:
            raise SimulationError(
                "DT mixing needs non-silent near-end and echo"
            )
        echo = echo * math.sqrt(p_near / (p_echo * 10 ** (spec.ser_db / 10)))

    reference = echo if spec.scenario == "ST-FE" else near_sig
    if spec.noisy:
        noise_sig = _fit(noise, length, min_length, "noise", rng)
        p_ref = active_power(reference, sample_rate)
        p_noise = active_power(noise_sig, sample_rate)
        if p_ref == 0.0 or p_noise == 0.0:
            raise SimulationError(
                "finite SNR needs a non-silent noise and reference"
            )
        noise_sig = noise_sig * math.sqrt(
            p_ref / (p_noise * 10 ** (spec.snr_db / 10))
        )
    else:
        noise_sig = zeros.copy()

    mic = near_sig + echo + noise_sig
    gain = 1.0
    peak = float(np.max(np.abs(mic))) if mic.size else 0.0
    if peak > CLIP_THRESHOLD:
        gain = CLIP_THRESHOLD / peak
        near_sig, echo = near_sig * gain, echo * gain
        noise_sig = noise_sig * gain
        mic = near_sig + echo + noise_sig
        logger.debug("scaled mixture by %.4f to avoid clipping", gain)

    p_near = active_power(near_sig, sample_rate)
    p_echo = active_power(echo, sample_rate)
    p_noise = active_power(noise_sig, sample_rate)
    ref_power = p_echo if spec.scenario == "ST-FE" else p_near
    return MixResult(
        mic=mic,
        farend=far_sig,
        target=near_sig,
        echo=echo,
        noise=noise_sig,
        spec=spec,
        measured_ser_db=_ratio_db(p_near, p_echo),
        measured_snr_db=_ratio_db(ref_power, p_noise),
        gain=gain,
    )


def list_wavs(directory: Union[str, Path], what: str) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{what} directory not found: {directory}")
    files = sorted(directory.glob("*.wav"))
    if not files:
        raise SimulationError(f"no .wav files in {what} directory {directory}")
    return files


@dataclass(frozen=True)
class _ClipJob:
    index: int
    seed: int
    near: Path
    far: Path
    noise: Path
    rir: Optional[Path]
    spec: MixSpec
    out_dir: Path
    sample_rate: int


def _fmt_db(value: float) -> Union[float, str]:
    if math.isfinite(value):
        return round(value, 4)
    return "+inf" if value > 0 else "-inf"


def _run_job(job: _ClipJob) -> Dict[str, Any]:
    stft = StftConfig(sample_rate=job.sample_rate)
    result = mix(
        read_wav(job.near, stft),
        read_wav(job.far, stft),
        read_wav(job.noise, stft),
        read_wav(job.rir, stft) if job.rir is not None else None,
        job.spec,
        sample_rate=job.sample_rate,
    )
    stem = f"clip_{job.index:05d}"
    paths = {
        "mic": job.out_dir / f"{stem}_mic.wav",
        "farend": job.out_dir / f"{stem}_farend.wav",
        "target": job.out_dir / f"{stem}_target.wav",
    }
    write_wav(paths["mic"], result.mic, job.sample_rate)
    write_wav(paths["farend"], result.farend, job.sample_rate)
    write_wav(paths["target"], result.target, job.sample_rate)

    manifest = {
        "index": job.index,
        "scenario": job.spec.scenario,
        "spec": job.spec.to_dict(),
        "sources": {
            "near": str(job.near),
            "far": str(job.far),
            "noise": str(job.noise),
            "rir": str(job.rir) if job.rir is not None else None,
        },
        "outputs": {k: str(v) for k, v in paths.items()},
        "measured_ser_db": _fmt_db(result.measured_ser_db),
        "measured_snr_db": _fmt_db(result.measured_snr_db),
        "gain": result.gain,
    }
    manifest_path = job.out_dir / f"{stem}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def generate_batch(
    near_dir: Union[str, Path],
    far_dir: Union[str, Path],
    noise_dir: Union[str, Path],
    out_dir: Union[str, Path],
    count: int,
    seed: int = 0,
    rir_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
    grid: Optional[str] = None,
    sample_rate: int = 16000,
) -> pd.DataFrame:
    """
    Mix ``count`` clips from WAV directories into ``out_dir``.

    Each clip gets its own generator seeded from ``(seed, index)``, so the
    output does not depend on ``workers``. A JSON manifest is written per
    clip and ``manifest.csv`` summarizes the run.

    Args:
        grid: None for the training recipe, ``"eval"`` to cycle through
            :meth:`MixSpec.evaluation_grid`.

    Returns:
        The summary manifest as a DataFrame.
    """
    if count < 1:
        raise SimulationError("count must be >= 1")
    if grid not in (None, "train", "eval"):
        raise SimulationError(f"unknown grid {grid!r}")
    near_files = list_wavs(near_dir, "near-end")
    far_files = list_wavs(far_dir, "far-end")
    noise_files = list_wavs(noise_dir, "noise")
    rir_files: Sequence[Optional[Path]] = (
        list_wavs(rir_dir, "rir") if rir_dir is not None else [None]
    )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    eval_specs = MixSpec.evaluation_grid() if grid == "eval" else []
    jobs = []
    for index in range(count):
        sequence = np.random.SeedSequence([seed, index])
        clip_seed = int(sequence.generate_state(1)[0])
        rng = np.random.default_rng(clip_seed)
        if eval_specs:
            base = eval_specs[index % len(eval_specs)]
            spec = MixSpec(
                base.ser_db,
                base.snr_db,
                base.scenario,
                seed=clip_seed,
                echo_delay=int(rng.integers(MAX_ECHO_DELAY + 1)),
            )
        else:
            spec = MixSpec.sample(clip_seed)
        jobs.append(
            _ClipJob(
                index=index,
                seed=clip_seed,
                near=near_files[rng.integers(len(near_files))],
                far=far_files[rng.integers(len(far_files))],
                noise=noise_files[rng.integers(len(noise_files))],
                rir=rir_files[rng.integers(len(rir_files))],
                spec=spec,
                out_dir=out_dir,
                sample_rate=sample_rate,
            )
        )

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            manifests = list(pool.map(_run_job, jobs))
    else:
        manifests = [_run_job(job) for job in jobs]

    df = pd.json_normalize(manifests)
    df.to_csv(out_dir / "manifest.csv", index=False)
    logger.info("generated %d clips in %s", len(df), out_dir)
    return df
