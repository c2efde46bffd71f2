"""Shared pytest fixtures for all tests."""

import logging
from pathlib import Path

import numpy as np
import pytest
import soundfile as sf

from dualpath_aec.config import RunConfig, StftConfig

SAMPLE_RATE = 16000

# Rows whose compression ratio is checked against the published table.
RATIO_PRESETS = {
    "trainmel-2": 1.9,
    "trainmel-4": 3.8,
    "skippred-2-postnet": 2.0,
    "dualpath-2x2": 3.7,
    "dualpath-2x4": 7.0,
    "dualpath-4x4": 13.0,
    "dualpath-4x8": 22.0,
}


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop CLI log handlers bound to a captured stream."""
    yield
    root = logging.getLogger("dualpath_aec")
    for handler in list(root.handlers):
        if getattr(handler, "_dpc_handler", False):
            root.removeHandler(handler)


@pytest.fixture
def stft_cfg():
    """Default 16 kHz / 20 ms / 10 ms framing."""
    return StftConfig()


@pytest.fixture
def run_cfg():
    """Default (uncompressed) run configuration."""
    return RunConfig()


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def speechlike():
    """Create an amplitude-modulated noise signal factory."""

    def make(seconds, seed=0, level=0.1):
        gen = np.random.default_rng(seed)
        n = int(seconds * SAMPLE_RATE)
        t = np.arange(n) / SAMPLE_RATE
        envelope = 0.6 + 0.4 * np.sin(2 * np.pi * 3.0 * t + gen.uniform(0, 6))
        return level * envelope * gen.standard_normal(n)

    return make


def write_wav(path, samples, rate=SAMPLE_RATE, subtype="PCM_16"):
    """Write a float signal as a WAV file and return its path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.asarray(samples), rate, subtype=subtype)
    return path


@pytest.fixture
def wav_pair(tmp_path, speechlike):
    """Create a microphone/reference WAV pair with a synthetic echo."""
    far = speechlike(1.0, seed=1, level=0.2)
    near = speechlike(1.0, seed=2, level=0.05)
    echo = 0.5 * np.concatenate([np.zeros(40), far[:-40]])
    mic = write_wav(tmp_path / "mic.wav", near + echo)
    ref = write_wav(tmp_path / "ref.wav", far)
    return mic, ref


@pytest.fixture
def source_dirs(tmp_path, speechlike):
    """Create near/far/noise/rir directories of 9.5 s WAV files."""
    dirs = {}
    for i, name in enumerate(("near", "far", "noise")):
        directory = tmp_path / name
        for j in range(2):
            write_wav(
                directory / f"{name}_{j}.wav",
                speechlike(9.5, seed=10 * i + j, level=0.1),
            )
        dirs[name] = directory
    rir = np.zeros(800)
    rir[20] = 0.6
    rir[21:] = 0.05 * np.random.default_rng(7).standard_normal(779)
    rir[21:] *= np.exp(-np.arange(779) / 150.0)
    dirs["rir"] = tmp_path / "rir"
    write_wav(dirs["rir"] / "room.wav", rir, subtype="FLOAT")
    return dirs
