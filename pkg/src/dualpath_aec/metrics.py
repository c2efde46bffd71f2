"""Objective metrics: SI-SNR, ERLE, STOI and an external WB-PESQ hook."""

import re
import subprocess
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from pystoi import stoi as _pystoi

from .errors import MetricError
from .log import get_logger

logger = get_logger(__name__)

SI_SNR_CAP_DB = 60.0
ERLE_CAP_DB = 80.0
STOI_MIN_SECONDS = 0.384
SCENARIOS = ("ST-FE", "ST-NE", "DT")


def _pair(est: np.ndarray, ref: np.ndarray, what: str):
    est = np.asarray(est, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise MetricError(
            f"{what}: signals differ in length ({est.size} vs {ref.size})"
        )
    if est.size == 0:
        raise MetricError(f"{what}: empty signals")
    return est, ref


def si_snr(est: np.ndarray, ref: np.ndarray) -> float:
    """
    Scale-invariant SNR in dB, capped at +/-60 dB.

    Both signals are mean-removed before projecting ``est`` onto ``ref``.

    Raises:
        MetricError: If ``ref`` is silent or the lengths differ.
    """
    est, ref = _pair(est, ref, "si_snr")
    est = est - est.mean()
    ref = ref - ref.mean()
    ref_energy = float(np.dot(ref, ref))
    if ref_energy <= 0.0:
        raise MetricError("si_snr: reference is all zeros")
    target = np.dot(est, ref) / ref_energy * ref
    noise = est - target
    target_energy = float(np.dot(target, target))
    noise_energy = float(np.dot(noise, noise))
    if noise_energy == 0.0:
        return SI_SNR_CAP_DB
    if target_energy <= 0.0:
        return -SI_SNR_CAP_DB
    value = 10.0 * np.log10(target_energy / noise_energy)
    return float(np.clip(value, -SI_SNR_CAP_DB, SI_SNR_CAP_DB))


def erle(mic: np.ndarray, out: np.ndarray) -> float:
    """
    Echo return loss enhancement over the whole file, capped at +/-80 dB.

    ``10 log10(sum(mic^2) / sum(out^2))``; two silent signals give 0 dB.
    """
    mic, out = _pair(mic, out, "erle")
    mic_energy = float(np.dot(mic, mic))
    out_energy = float(np.dot(out, out))
    if mic_energy == 0.0 and out_energy == 0.0:
        return 0.0
    if out_energy == 0.0:
        return ERLE_CAP_DB
    if mic_energy == 0.0:
        return -ERLE_CAP_DB
    value = 10.0 * np.log10(mic_energy / out_energy)
    return float(np.clip(value, -ERLE_CAP_DB, ERLE_CAP_DB))


def stoi(est: np.ndarray, ref: np.ndarray, sample_rate: int = 16000) -> float:
    """
    Short-time objective intelligibility in [0, 1] (pystoi).

    Raises:
        MetricError: If the signals are shorter than one 384 ms segment.
    """
    est, ref = _pair(est, ref, "stoi")
    if est.size < STOI_MIN_SECONDS * sample_rate:
        raise MetricError(
            f"stoi: need at least {STOI_MIN_SECONDS * 1000:.0f} ms, got "
            f"{est.size / sample_rate * 1000:.0f} ms"
        )
    return float(_pystoi(ref, est, sample_rate, extended=False))


_MOS_LINE = re.compile(r"MOS-LQO.*?=\s*([-\d.]+)(?:\s+([-\d.]+))?")
_FLOAT = re.compile(r"[-+]?\d+\.\d+")


def external_pesq(
    ref_path: Union[str, Path],
    est_path: Union[str, Path],
    pesq_bin: Union[str, Path],
    sample_rate: int = 16000,
    timeout: float = 120.0,
) -> float:
    """
    Run an external WB-PESQ executable and parse its MOS-LQO score.

    The binary is called as ``<bin> +<rate> +wb <ref> <est>``, the
    command-line convention of the ITU reference implementation.

    Raises:
        FileNotFoundError: If the executable is missing.
        MetricError: If it fails or prints no score.
    """
    pesq_bin = Path(pesq_bin)
    if not pesq_bin.exists():
        raise FileNotFoundError(f"PESQ executable not found: {pesq_bin}")
    cmd = [
        str(pesq_bin),
        f"+{sample_rate}",
        "+wb",
        str(ref_path),
        str(est_path),
    ]
    logger.debug("running %s", " ".join(cmd))
    try:
        proc = subprocess.run(
            cmd, capture_output=True, text=True, timeout=timeout, check=False
        )
    except subprocess.TimeoutExpired as exc:
        raise MetricError(f"pesq: {pesq_bin} timed out") from exc
    if proc.returncode != 0:
        raise MetricError(
            f"pesq: {pesq_bin} exited with {proc.returncode}: "
            f"{proc.stderr.strip()[:200]}"
        )
    match = _MOS_LINE.search(proc.stdout)
    if match:
        return float(match.group(2) or match.group(1))
    numbers = _FLOAT.findall(proc.stdout)
    if not numbers:
        raise MetricError(f"pesq: no score in output of {pesq_bin}")
    return float(numbers[-1])


def evaluate(
    est: np.ndarray,
    ref: Optional[np.ndarray] = None,
    mic: Optional[np.ndarray] = None,
    scenario: Optional[str] = None,
    sample_rate: int = 16000,
) -> Dict[str, float]:
    """
    Metrics a scenario is judged by.

    ``ST-FE`` scores ERLE against ``mic``; ``ST-NE`` and ``DT`` score SI-SNR
    and STOI against ``ref``. Without a scenario, every metric whose
    inputs are present is computed.

    Returns:
        Metric name -> value.
    """
    if scenario is not None and scenario not in SCENARIOS:
        raise MetricError(
            f"unknown scenario {scenario!r}; expected one of {SCENARIOS}"
        )
    wants_erle = scenario in (None, "ST-FE")
    wants_speech = scenario in (None, "ST-NE", "DT")

    results: Dict[str, float] = {}
    if wants_erle and mic is not None:
        results["erle"] = erle(mic, est)
    elif scenario == "ST-FE":
        raise MetricError("ST-FE scoring needs the microphone signal")

    if wants_speech and ref is not None:
        if np.any(np.asarray(ref) != 0):
            results["si_snr"] = si_snr(est, ref)
            results["stoi"] = stoi(est, ref, sample_rate)
        elif scenario is not None:
            raise MetricError(f"{scenario} scoring needs a non-silent target")
        else:
            logger.info("target is silent; skipping si_snr and stoi")
    elif scenario in ("ST-NE", "DT"):
        raise MetricError(f"{scenario} scoring needs the clean target")
    return results
